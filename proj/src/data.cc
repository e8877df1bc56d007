/*
 * Copyright 2026 The MPFL Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mpfl/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <utility>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

std::vector<std::string> SplitCsvLine(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  for (std::string& s : cells) {
    s = std::string(absl::StripAsciiWhitespace(s));
  }
  return cells;
}

// Maps each declared column to either one numeric slot or a one-hot block.
struct ColumnPlan {
  size_t csv_index = 0;
  bool categorical = false;
  std::vector<std::string> labels;  // sorted, categorical only
};

}  // namespace

absl::StatusOr<Normalization> ParseNormalization(std::string_view name) {
  if (name == "none") return Normalization::kNone;
  if (name == "minmax") return Normalization::kMinMax;
  if (name == "zscore") return Normalization::kZScore;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown normalization '", std::string(name), "'"));
}

absl::StatusOr<Dataset> LoadCsv(const std::string& path,
                                const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::string line;
  if (!std::getline(in, line)) {
    return absl::InvalidArgumentError(absl::StrCat(path, ": empty file"));
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = SplitCsvLine(line);
  std::map<std::string, size_t> column_index;
  for (size_t c = 0; c < header.size(); ++c) column_index[header[c]] = c;

  std::vector<std::vector<std::string>> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (absl::StripAsciiWhitespace(line).empty()) continue;
    std::vector<std::string> cells = SplitCsvLine(line);
    if (cells.size() != header.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ":", line_no, ": expected ", header.size(),
                       " cells, found ", cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(path, ": no data rows"));
  }

  const std::set<std::string> categorical(schema.categorical_columns.begin(),
                                          schema.categorical_columns.end());
  auto plan_columns = [&](const std::vector<std::string>& names)
      -> absl::StatusOr<std::vector<ColumnPlan>> {
    std::vector<ColumnPlan> plans;
    for (const std::string& name : names) {
      auto it = column_index.find(name);
      if (it == column_index.end()) {
        return absl::InvalidArgumentError(
            absl::StrCat(path, ": missing column '", name, "'"));
      }
      ColumnPlan p;
      p.csv_index = it->second;
      p.categorical = categorical.contains(name);
      if (p.categorical) {
        std::set<std::string> labels;
        for (const auto& row : rows) labels.insert(row[p.csv_index]);
        p.labels.assign(labels.begin(), labels.end());
      }
      plans.push_back(std::move(p));
    }
    return plans;
  };
  if (schema.feature_columns.empty() || schema.target_columns.empty()) {
    return absl::InvalidArgumentError(
        "schema needs at least one feature and one target column");
  }
  MPFL_ASSIGN_OR_RETURN(std::vector<ColumnPlan> features,
                        plan_columns(schema.feature_columns));
  MPFL_ASSIGN_OR_RETURN(std::vector<ColumnPlan> targets,
                        plan_columns(schema.target_columns));

  auto expand = [&](const std::vector<ColumnPlan>& plans,
                    const std::vector<std::string>& row, size_t row_no,
                    Vector& out) -> absl::Status {
    for (const ColumnPlan& p : plans) {
      const std::string& cell = row[p.csv_index];
      if (p.categorical) {
        const size_t pos = static_cast<size_t>(
            std::lower_bound(p.labels.begin(), p.labels.end(), cell) -
            p.labels.begin());
        for (size_t k = 0; k < p.labels.size(); ++k) {
          out.push_back(k == pos ? 1.0 : 0.0);
        }
        continue;
      }
      double v = 0.0;
      if (!absl::SimpleAtod(cell, &v) || !std::isfinite(v)) {
        return absl::InvalidArgumentError(absl::StrCat(
            path, ":", row_no, ": column '", header[p.csv_index],
            "' has non-numeric value '", cell, "'"));
      }
      out.push_back(v);
    }
    return absl::OkStatus();
  };

  Dataset ds;
  ds.name = path;
  for (size_t r = 0; r < rows.size(); ++r) {
    Sample s;
    // +2: one for the header, one for 1-based numbering.
    MPFL_RETURN_IF_ERROR(expand(features, rows[r], r + 2, s.x));
    MPFL_RETURN_IF_ERROR(expand(targets, rows[r], r + 2, s.target));
    ds.samples.push_back(std::move(s));
  }
  ds.feature_dim = ds.samples.front().x.size();
  ds.target_dim = ds.samples.front().target.size();
  return ds;
}

absl::Status WriteCsv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) return absl::PermissionDeniedError(absl::StrCat("cannot write ", path));
  std::vector<std::string> header;
  for (size_t i = 0; i < dataset.feature_dim; ++i) header.push_back(absl::StrCat("f", i));
  for (size_t i = 0; i < dataset.target_dim; ++i) header.push_back(absl::StrCat("t", i));
  out << absl::StrJoin(header, ",") << "\n";
  for (const Sample& s : dataset.samples) {
    std::vector<std::string> cells;
    // StrCat uses 6 significant digits; round-trip needs 17.
    for (double v : s.x) cells.push_back(absl::StrFormat("%.17g", v));
    for (double v : s.target) cells.push_back(absl::StrFormat("%.17g", v));
    out << absl::StrJoin(cells, ",") << "\n";
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<Dataset> SynthClassification(size_t num_features,
                                            size_t num_classes,
                                            size_t num_samples, uint64_t seed,
                                            double cluster_spread) {
  if (num_classes < 2) {
    return absl::InvalidArgumentError("need at least two classes");
  }
  if (num_features == 0 || num_samples == 0) {
    return absl::InvalidArgumentError("need positive feature and sample counts");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> centers(num_classes, Vector(num_features));
  for (Vector& c : centers) {
    for (double& v : c) v = 3.0 * normal(rng);
  }
  Dataset ds;
  ds.name = absl::StrCat("synthetic-classification-", num_classes);
  ds.feature_dim = num_features;
  ds.target_dim = num_classes;
  for (size_t i = 0; i < num_samples; ++i) {
    const size_t label = i % num_classes;
    Sample s;
    s.x.resize(num_features);
    for (size_t j = 0; j < num_features; ++j) {
      s.x[j] = centers[label][j] + cluster_spread * normal(rng);
    }
    s.target.assign(num_classes, 0.0);
    s.target[label] = 1.0;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

absl::StatusOr<Dataset> SynthRegression(size_t num_features,
                                        size_t num_targets,
                                        size_t num_samples, uint64_t seed) {
  if (num_features == 0 || num_targets == 0 || num_samples == 0) {
    return absl::InvalidArgumentError("need positive dimensions");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr size_t kTeacherWidth = 8;
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(num_features));
  Matrix hidden(kTeacherWidth, num_features);
  for (double& v : hidden.data()) v = normal(rng) * in_scale;
  Matrix head(num_targets, kTeacherWidth);
  for (double& v : head.data()) v = normal(rng) / std::sqrt(kTeacherWidth);

  Dataset ds;
  ds.name = "synthetic-regression";
  ds.feature_dim = num_features;
  ds.target_dim = num_targets;
  for (size_t i = 0; i < num_samples; ++i) {
    Sample s;
    s.x.resize(num_features);
    for (double& v : s.x) v = unit(rng);
    Vector h = Relu(*MatVec(hidden, s.x));
    s.target = *MatVec(head, h);
    for (double& t : s.target) t += 0.01 * normal(rng);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Normalizer Normalizer::Fit(std::span<const Sample> rows, size_t feature_dim,
                           Normalization kind) {
  Normalizer n;
  n.kind = kind;
  n.offset.assign(feature_dim, 0.0);
  n.scale.assign(feature_dim, 1.0);
  if (kind == Normalization::kNone || rows.empty()) return n;
  for (size_t j = 0; j < feature_dim; ++j) {
    if (kind == Normalization::kMinMax) {
      double lo = rows[0].x[j];
      double hi = lo;
      for (const Sample& s : rows) {
        lo = std::min(lo, s.x[j]);
        hi = std::max(hi, s.x[j]);
      }
      n.offset[j] = lo;
      n.scale[j] = hi > lo ? 1.0 / (hi - lo) : 0.0;
    } else {
      double mean = 0.0;
      for (const Sample& s : rows) mean += s.x[j];
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (const Sample& s : rows) var += (s.x[j] - mean) * (s.x[j] - mean);
      var /= static_cast<double>(rows.size());
      n.offset[j] = mean;
      n.scale[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
  }
  return n;
}

void Normalizer::Apply(std::vector<Sample>& rows) const {
  if (kind == Normalization::kNone) return;
  for (Sample& s : rows) {
    for (size_t j = 0; j < s.x.size() && j < offset.size(); ++j) {
      s.x[j] = (s.x[j] - offset[j]) * scale[j];
    }
  }
}

absl::StatusOr<std::pair<ShardPlan, Splits>> Shard(const Dataset& dataset,
                                                   size_t k, uint64_t seed) {
  if (k == 0) return absl::InvalidArgumentError("need at least one client");
  const size_t n = dataset.samples.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const size_t n_train = n * 8 / 10;
  const size_t n_val = n / 10;
  if (k > n_train) {
    return absl::InvalidArgumentError(absl::StrCat(
        k, " clients but only ", n_train, " training samples"));
  }
  Splits splits;
  for (size_t i = 0; i < n; ++i) {
    const Sample& s = dataset.samples[order[i]];
    if (i < n_train) {
      splits.train.push_back(s);
    } else if (i < n_train + n_val) {
      splits.validation.push_back(s);
    } else {
      splits.test.push_back(s);
    }
  }
  ShardPlan plan;
  plan.seed = seed;
  plan.assignments.resize(k);
  std::vector<size_t> train_order(n_train);
  std::iota(train_order.begin(), train_order.end(), size_t{0});
  std::shuffle(train_order.begin(), train_order.end(), rng);
  for (size_t i = 0; i < n_train; ++i) {
    plan.assignments[i % k].push_back(train_order[i]);
  }
  for (auto& a : plan.assignments) std::sort(a.begin(), a.end());
  return std::make_pair(std::move(plan), std::move(splits));
}

absl::StatusOr<PreparedData> PrepareSplits(const Dataset& dataset, size_t k,
                                           uint64_t seed,
                                           Normalization normalization) {
  MPFL_ASSIGN_OR_RETURN(auto sharded, Shard(dataset, k, seed));
  PreparedData out;
  out.plan = std::move(sharded.first);
  out.splits = std::move(sharded.second);
  out.normalizer =
      Normalizer::Fit(out.splits.train, dataset.feature_dim, normalization);
  out.normalizer.Apply(out.splits.train);
  out.normalizer.Apply(out.splits.validation);
  out.normalizer.Apply(out.splits.test);
  for (const auto& assignment : out.plan.assignments) {
    std::vector<Sample> shard;
    shard.reserve(assignment.size());
    for (size_t i : assignment) shard.push_back(out.splits.train[i]);
    out.shards.push_back(std::move(shard));
  }
  return out;
}

std::vector<Sample> SelectBatch(std::span<const Sample> shard,
                                size_t batch_size, uint64_t seed,
                                uint64_t round_id, uint32_t client_id) {
  if (batch_size == 0 || batch_size >= shard.size()) {
    return {shard.begin(), shard.end()};
  }
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(round_id),
                    static_cast<uint32_t>(round_id >> 32), client_id};
  std::mt19937_64 rng(seq);
  std::vector<size_t> idx(shard.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(batch_size);
  std::sort(idx.begin(), idx.end());
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  for (size_t i : idx) batch.push_back(shard[i]);
  return batch;
}

}  // namespace mpfl
