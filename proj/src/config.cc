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

#include "mpfl/config.h"

#include <fstream>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

using Json = nlohmann::ordered_json;

template <typename T>
void Read(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->get<T>();
  }
}

}  // namespace

absl::Status RunConfig::Validate() const {
  if (dims.size() < 3) {
    return absl::InvalidArgumentError("dims needs at least 3 widths");
  }
  for (size_t d : dims) {
    if (d == 0) return absl::InvalidArgumentError("dims entries must be >= 1");
  }
  if (clients == 0) return absl::InvalidArgumentError("clients must be >= 1");
  if (!(learning_rate > 0.0)) {
    return absl::InvalidArgumentError("learning_rate must be positive");
  }
  if (m > dims.back()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "m = ", m, " exceeds the output width ", dims.back()));
  }
  if (dataset.kind != "synthetic_classification" &&
      dataset.kind != "synthetic_regression" && dataset.kind != "csv") {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown dataset kind '", dataset.kind, "'"));
  }
  if (dataset.kind == "csv" && dataset.path.empty()) {
    return absl::InvalidArgumentError("csv dataset needs a path");
  }
  if (transport.max_frame_bytes < 64) {
    return absl::InvalidArgumentError("max_frame_bytes is too small");
  }
  return noise.Validate();
}

std::string RunConfig::ToJson() const {
  Json j;
  j["mode"] = ModeName(mode);
  Json ds;
  ds["kind"] = dataset.kind;
  ds["features"] = dataset.features;
  ds["outputs"] = dataset.outputs;
  ds["samples"] = dataset.samples;
  ds["seed"] = dataset.seed;
  ds["cluster_spread"] = dataset.cluster_spread;
  ds["path"] = dataset.path;
  ds["feature_columns"] = dataset.schema.feature_columns;
  ds["target_columns"] = dataset.schema.target_columns;
  ds["categorical_columns"] = dataset.schema.categorical_columns;
  ds["normalization"] =
      dataset.normalization == Normalization::kNone     ? "none"
      : dataset.normalization == Normalization::kMinMax ? "minmax"
                                                        : "zscore";
  j["dataset"] = std::move(ds);
  j["dims"] = dims;
  j["clients"] = clients;
  j["rounds"] = rounds;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["m"] = m;
  Json nz;
  nz["r_min"] = noise.r_min;
  nz["r_max"] = noise.r_max;
  nz["gamma_min"] = noise.gamma_min;
  nz["gamma_max"] = noise.gamma_max;
  nz["radd_min"] = noise.radd_min;
  nz["radd_max"] = noise.radd_max;
  nz["delta_min"] = noise.delta_min;
  j["noise"] = std::move(nz);
  j["seed"] = seed;
  j["init_stddev"] = init_stddev;
  j["parallel"] = parallel;
  j["record_wall_clock"] = record_wall_clock;
  Json tr;
  tr["kind"] = transport.tcp ? "tcp" : "inproc";
  tr["host"] = transport.host;
  tr["port"] = transport.port;
  tr["connect_timeout_ms"] = transport.connect_timeout_ms;
  tr["accept_timeout_ms"] = transport.accept_timeout_ms;
  tr["round_timeout_ms"] = transport.round_timeout_ms;
  tr["max_frame_bytes"] = transport.max_frame_bytes;
  j["transport"] = std::move(tr);
  Json out;
  out["metrics_csv"] = metrics_csv;
  out["manifest"] = manifest;
  j["output"] = std::move(out);
  return j.dump();
}

absl::StatusOr<RunConfig> ParseConfig(std::string_view json_text) {
  Json j = Json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    return absl::InvalidArgumentError("config is not a JSON object");
  }
  RunConfig c;
  try {
    std::string mode = "perturbed";
    Read(j, "mode", mode);
    MPFL_ASSIGN_OR_RETURN(c.mode, ParseMode(mode));
    if (auto it = j.find("dataset"); it != j.end()) {
      const Json& ds = *it;
      Read(ds, "kind", c.dataset.kind);
      Read(ds, "features", c.dataset.features);
      Read(ds, "outputs", c.dataset.outputs);
      Read(ds, "samples", c.dataset.samples);
      Read(ds, "seed", c.dataset.seed);
      Read(ds, "cluster_spread", c.dataset.cluster_spread);
      Read(ds, "path", c.dataset.path);
      Read(ds, "feature_columns", c.dataset.schema.feature_columns);
      Read(ds, "target_columns", c.dataset.schema.target_columns);
      Read(ds, "categorical_columns", c.dataset.schema.categorical_columns);
      std::string norm = "minmax";
      Read(ds, "normalization", norm);
      MPFL_ASSIGN_OR_RETURN(c.dataset.normalization, ParseNormalization(norm));
    }
    Read(j, "dims", c.dims);
    Read(j, "clients", c.clients);
    Read(j, "rounds", c.rounds);
    Read(j, "learning_rate", c.learning_rate);
    Read(j, "batch_size", c.batch_size);
    Read(j, "m", c.m);
    if (auto it = j.find("noise"); it != j.end()) {
      const Json& nz = *it;
      Read(nz, "r_min", c.noise.r_min);
      Read(nz, "r_max", c.noise.r_max);
      Read(nz, "gamma_min", c.noise.gamma_min);
      Read(nz, "gamma_max", c.noise.gamma_max);
      Read(nz, "radd_min", c.noise.radd_min);
      Read(nz, "radd_max", c.noise.radd_max);
      Read(nz, "delta_min", c.noise.delta_min);
    }
    Read(j, "seed", c.seed);
    Read(j, "init_stddev", c.init_stddev);
    Read(j, "parallel", c.parallel);
    Read(j, "record_wall_clock", c.record_wall_clock);
    if (auto it = j.find("transport"); it != j.end()) {
      const Json& tr = *it;
      std::string kind = "inproc";
      Read(tr, "kind", kind);
      if (kind != "inproc" && kind != "tcp") {
        return absl::InvalidArgumentError(
            absl::StrCat("unknown transport '", kind, "'"));
      }
      c.transport.tcp = kind == "tcp";
      Read(tr, "host", c.transport.host);
      Read(tr, "port", c.transport.port);
      Read(tr, "connect_timeout_ms", c.transport.connect_timeout_ms);
      Read(tr, "accept_timeout_ms", c.transport.accept_timeout_ms);
      Read(tr, "round_timeout_ms", c.transport.round_timeout_ms);
      Read(tr, "max_frame_bytes", c.transport.max_frame_bytes);
    }
    if (auto it = j.find("output"); it != j.end()) {
      Read(*it, "metrics_csv", c.metrics_csv);
      Read(*it, "manifest", c.manifest);
    }
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("config: ", e.what()));
  }
  MPFL_RETURN_IF_ERROR(c.Validate());
  return c;
}

absl::StatusOr<RunConfig> LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open config ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseConfig(buf.str());
}

}  // namespace mpfl
