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

// Acceptance suite: prints one PASS/FAIL line per criterion.
//
//   mpfl_acceptance                 all criteria
//   mpfl_acceptance --criterion N   one criterion

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/strings/str_format.h"
#include "mpfl/attack.h"
#include "mpfl/config.h"
#include "mpfl/model.h"
#include "mpfl/training.h"
#include "mpfl/verify.h"

namespace mpfl {
namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Max over layers of max|a - b| / max|b|; non-finite values count as infinite.
double LayerwiseError(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return INFINITY;
  double worst = 0.0;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    const auto x = a.layers[l].data();
    const auto y = b.layers[l].data();
    if (x.size() != y.size()) return INFINITY;
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < x.size(); ++k) {
      const double d = std::abs(x[k] - y[k]);
      if (!std::isfinite(d)) return INFINITY;
      num = std::max(num, d);
      den = std::max(den, std::abs(y[k]));
    }
    worst = std::max(worst, den > 0.0 ? num / den : num);
  }
  return worst;
}

struct Outcome {
  bool passed = false;
  std::string summary;
  std::vector<std::string> details;
};

void Print(int id, const Outcome& o) {
  std::cout << absl::StrFormat("CRITERION %d %s: %s\n", id,
                               o.passed ? "PASS" : "FAIL", o.summary);
  for (const std::string& d : o.details) std::cout << "    " << d << "\n";
  std::cout.flush();
}

// ---------------------------------------------------------------------------
// Criteria 1, 7 and 8: full training runs.

struct RunShape {
  std::vector<size_t> dims;
  size_t clients;
};

std::vector<RunShape> TrainingShapes() {
  std::vector<RunShape> shapes;
  for (const auto& dims : {std::vector<size_t>{17, 32, 16, 1},
                           std::vector<size_t>{20, 64, 32, 10}}) {
    for (size_t k : {1, 5, 10}) shapes.push_back({dims, k});
  }
  return shapes;
}

RunConfig TrainingConfig(const RunShape& shape, Mode mode, double gamma_max) {
  RunConfig c;
  c.mode = mode;
  c.dims = shape.dims;
  c.dataset.kind = shape.dims.back() == 1 ? "synthetic_regression"
                                          : "synthetic_classification";
  c.dataset.features = shape.dims.front();
  c.dataset.outputs = shape.dims.back();
  c.dataset.samples = 500;
  c.clients = shape.clients;
  c.rounds = 200;
  c.learning_rate = 0.05;
  c.seed = 42;
  c.noise.gamma_max = gamma_max;
  c.record_wall_clock = false;
  return c;
}

std::string ShapeName(const RunShape& s) {
  std::string d;
  for (size_t i = 0; i < s.dims.size(); ++i) {
    absl::StrAppend(&d, i ? "," : "(", s.dims[i]);
  }
  return absl::StrCat(d, ") K=", s.clients);
}

struct EqualityRun {
  double round_error = 0.0;  // worst per-round recovered-vs-plain gradient
  double final_error = 0.0;  // perturbed vs plain final parameters
  double seconds = 0.0;
  std::string metrics_csv;
  absl::Status status;
};

EqualityRun RunEquality(const RunShape& shape, double gamma_max,
                        bool with_plain) {
  EqualityRun out;
  const auto start = Clock::now();
  const RunConfig pert = TrainingConfig(shape, Mode::kPerturbed, gamma_max);
  absl::StatusOr<PreparedData> data = LoadRunData(pert);
  if (!data.ok()) {
    out.status = data.status();
    return out;
  }
  // Oracle: plain sample-weighted gradient of the same pre-update model.
  auto observer = [&](uint64_t, const MlpParams& before,
                      const GradientSet& applied) {
    std::vector<WeightedGradient> grads;
    for (const auto& shard : data->shards) {
      absl::StatusOr<GradientSet> g =
          LocalGradientPlain(before, shard, Execution::kParallel);
      if (!g.ok()) {
        out.round_error = INFINITY;
        return;
      }
      grads.push_back({*std::move(g), shard.size()});
    }
    absl::StatusOr<GradientSet> expect = WeightedAverage(grads);
    out.round_error = std::max(
        out.round_error, expect.ok() ? LayerwiseError(applied, *expect) : INFINITY);
  };
  absl::StatusOr<TrainingResult> a = RunInProc(pert, *data, observer);
  if (!a.ok()) {
    out.status = a.status();
    return out;
  }
  out.metrics_csv = MetricsCsv(a->records, pert.dims.size() - 1);
  if (with_plain) {
    const RunConfig plain = TrainingConfig(shape, Mode::kPlain, gamma_max);
    absl::StatusOr<TrainingResult> b = RunInProc(plain, *data);
    if (!b.ok()) {
      out.status = b.status();
      return out;
    }
    out.final_error = LayerwiseError(a->final_params, b->final_params);
  }
  out.seconds = Seconds(start);
  return out;
}

constexpr double kRoundTolerance = 1e-9;
constexpr double kFinalTolerance = 1e-6;
constexpr double kRuntimeLimit = 120.0;

struct EqualitySummary {
  Outcome outcome;
  double worst_round = 0.0;
  double worst_final = 0.0;
  std::map<std::string, std::string> csv;
};

EqualitySummary Criterion1(double gamma_max, bool informative) {
  EqualitySummary s;
  bool rounds_ok = true, final_ok = true, time_ok = true, runs_ok = true;
  for (const RunShape& shape : TrainingShapes()) {
    EqualityRun r = RunEquality(shape, gamma_max, !informative);
    if (!r.status.ok()) {
      runs_ok = false;
      s.outcome.details.push_back(
          absl::StrCat(ShapeName(shape), ": run failed: ", r.status.ToString()));
      continue;
    }
    s.csv[ShapeName(shape)] = r.metrics_csv;
    s.worst_round = std::max(s.worst_round, r.round_error);
    s.worst_final = std::max(s.worst_final, r.final_error);
    rounds_ok &= r.round_error <= kRoundTolerance;
    final_ok &= r.final_error <= kFinalTolerance;
    time_ok &= r.seconds <= kRuntimeLimit;
    if (informative) {
      s.outcome.details.push_back(absl::StrFormat(
          "%-22s round_err=%.3e", ShapeName(shape), r.round_error));
    } else {
      s.outcome.details.push_back(absl::StrFormat(
          "%-22s round_err=%.3e %s  final_err=%.3e %s  %.1fs",
          ShapeName(shape), r.round_error,
          r.round_error <= kRoundTolerance ? "ok" : "over",
          r.final_error, r.final_error <= kFinalTolerance ? "ok" : "over",
          r.seconds));
    }
  }
  s.outcome.passed = runs_ok && rounds_ok && final_ok && time_ok;
  s.outcome.summary = absl::StrFormat(
      "per-round gradient max rel err %.3e (tol %.0e) %s; final params max rel "
      "err %.3e (tol %.0e) %s; runtime %s",
      s.worst_round, kRoundTolerance, rounds_ok ? "ok" : "EXCEEDED",
      s.worst_final, kFinalTolerance, final_ok ? "ok" : "EXCEEDED",
      time_ok ? "ok" : "EXCEEDED");
  return s;
}

Outcome Criterion7(const std::map<std::string, std::string>* previous) {
  Outcome o;
  std::map<std::string, std::string> first;
  if (previous != nullptr) first = *previous;
  bool same = true;
  size_t compared = 0;
  for (const RunShape& shape : TrainingShapes()) {
    const std::string name = ShapeName(shape);
    if (!first.contains(name)) {
      EqualityRun r = RunEquality(shape, NoiseConfig{}.gamma_max, false);
      if (!r.status.ok()) {
        same = false;
        o.details.push_back(absl::StrCat(name, ": run failed"));
        continue;
      }
      first[name] = r.metrics_csv;
    }
    EqualityRun again = RunEquality(shape, NoiseConfig{}.gamma_max, false);
    const bool eq = again.status.ok() && again.metrics_csv == first[name];
    same &= eq;
    ++compared;
    o.details.push_back(absl::StrFormat("%-22s %zu bytes %s", name,
                                        again.metrics_csv.size(),
                                        eq ? "identical" : "DIFFERENT"));
  }
  o.passed = same && compared == TrainingShapes().size();
  o.summary = absl::StrFormat("%zu repeated in-proc runs, metrics CSV %s",
                              compared, same ? "byte-identical" : "differs");
  return o;
}

Outcome Criterion8(const std::string& mutant_binary) {
  Outcome o;
  const std::string cmd = mutant_binary + " --criterion 1 --machine 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    o.summary = "cannot start the mutant build";
    return o;
  }
  std::string text;
  char buf[4096];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) text += buf;
  const int rc = pclose(pipe);
  double round_err = -1.0, final_err = -1.0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::sscanf(line.c_str(), "MUTANT round_err=%lf final_err=%lf", &round_err,
                &final_err);
  }
  // The correct build's final-parameter check passes at 1e-6; the mutant must
  // break it, with a per-round gradient error far above rounding.
  const bool c1_failed = rc != 0 && text.find("CRITERION 1 FAIL") != std::string::npos;
  const bool final_broken = final_err > kFinalTolerance;
  const bool gross = round_err > 1e-3;
  o.passed = c1_failed && final_broken && gross;
  o.summary = absl::StrFormat(
      "mutant build: criterion 1 %s, per-round err %.3e, final params err %.3e",
      c1_failed ? "FAILS" : "passes", round_err, final_err);
  std::istringstream again(text);
  while (std::getline(again, line)) {
    if (line.rfind("    ", 0) == 0) o.details.push_back("mutant " + line.substr(4));
  }
  return o;
}

// ---------------------------------------------------------------------------
// Criteria 2-6.

const std::vector<std::vector<size_t>>& Sizes() {
  static const auto* sizes = new std::vector<std::vector<size_t>>(VerifyOptions{}.sizes);
  return *sizes;
}

Outcome Criterion2() {
  Outcome o;
  double hidden = 0.0, output = 0.0;
  size_t n = 0;
  bool ok = true;
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    absl::StatusOr<VerifyInstance> inst = MakeInstance(Sizes()[seed % Sizes().size()], seed);
    absl::StatusOr<ForwardErrors> f =
        inst.ok() ? CheckForward(*inst) : absl::StatusOr<ForwardErrors>(inst.status());
    if (!f.ok()) {
      ok = false;
      continue;
    }
    hidden = std::max(hidden, f->hidden);
    output = std::max(output, f->output);
    ++n;
  }
  o.passed = ok && n == 100 && hidden <= 1e-10 && output <= 1e-9;
  o.summary = absl::StrFormat(
      "%zu instances; hidden max rel err %.3e (tol 1e-10), output %.3e (tol 1e-9)",
      n, hidden, output);
  return o;
}

Outcome Criterion3() {
  Outcome o;
  const auto start = Clock::now();
  double identity = 0.0, fd = 0.0;
  size_t n = 0;
  bool ok = true;
  for (uint64_t seed = 1001; seed <= 1050; ++seed) {
    absl::StatusOr<VerifyInstance> inst = MakeInstance(Sizes()[seed % Sizes().size()], seed);
    if (!inst.ok()) {
      ok = false;
      continue;
    }
    absl::StatusOr<double> id = CheckGradientIdentity(*inst);
    absl::StatusOr<double> num = CheckFiniteDifferences(*inst);
    if (!id.ok() || !num.ok()) {
      ok = false;
      continue;
    }
    identity = std::max(identity, *id);
    fd = std::max(fd, *num);
    ++n;
  }
  const double secs = Seconds(start);
  o.passed = ok && n == 50 && identity <= 1e-9 && fd <= 1e-6 && secs <= 60;
  o.summary = absl::StrFormat(
      "%zu instances; identity max rel err %.3e (tol 1e-9), finite differences "
      "%.3e (tol 1e-6), %.1fs",
      n, identity, fd, secs);
  return o;
}

Outcome Criterion4() {
  Outcome o;
  bool ok = true;
  double repro = 0.0, pairwise = INFINITY;
  for (size_t i = 0; i < Sizes().size(); ++i) {
    absl::StatusOr<AmbiguityReport> r = AmbiguityExperiment(Sizes()[i], 100, 7 + i);
    if (!r.ok()) {
      ok = false;
      continue;
    }
    ok &= r->count == 100 && r->max_reproduction_error <= 1e-12 &&
          r->min_pairwise_distance > 1e-6;
    repro = std::max(repro, r->max_reproduction_error);
    pairwise = std::min(pairwise, r->min_pairwise_distance);
  }
  o.passed = ok;
  o.summary = absl::StrFormat(
      "%zu targets x 100 witnesses; reproduction max rel err %.3e (tol 1e-12), "
      "min pairwise distance %.3e (> 1e-6)",
      Sizes().size(), repro, pairwise);
  return o;
}

Outcome Criterion5() {
  Outcome o;
  bool ok = true;
  for (size_t m : {1, 2, 5, 10}) {
    for (const std::string& name : AdversaryNames()) {
      absl::StatusOr<std::unique_ptr<Adversary>> adv = MakeAdversary(name);
      absl::StatusOr<GuessReport> r =
          adv.ok() ? ArgmaxGuessExperiment(10, m, 10000, **adv, 100 + m, {},
                                           Execution::kParallel)
                   : absl::StatusOr<GuessReport>(adv.status());
      if (!r.ok()) {
        ok = false;
        o.details.push_back(absl::StrCat(name, " m=", m, ": ", r.status().ToString()));
        continue;
      }
      const bool within = r->success_rate <= r->bound;
      ok &= within;
      o.details.push_back(absl::StrFormat(
          "m=%-2zu %-13s success %.4f  bound %.4f  %s", m, name, r->success_rate,
          r->bound, within ? "ok" : "OVER"));
    }
  }
  o.passed = ok;
  o.summary = absl::StrFormat(
      "nL=10, m in {1,2,5,10}, 10000 trials, %zu adversaries: %s",
      AdversaryNames().size(), ok ? "all within 1/m + 3 sd" : "bound exceeded");
  return o;
}

Outcome Criterion6() {
  Outcome o;
  const auto start = Clock::now();
  RunConfig c = TrainingConfig({{20, 64, 32, 10}, 2}, Mode::kPerturbed,
                               NoiseConfig{}.gamma_max);
  c.rounds = 10;
  absl::StatusOr<PreparedData> data = LoadRunData(c);
  absl::StatusOr<TrainingResult> a =
      data.ok() ? RunInProc(c, *data) : absl::StatusOr<TrainingResult>(data.status());
  absl::StatusOr<TrainingResult> b =
      data.ok() ? RunTcpLoopback(c, *data) : absl::StatusOr<TrainingResult>(data.status());
  const double secs = Seconds(start);
  if (!a.ok() || !b.ok()) {
    o.summary = absl::StrCat("run failed: ", (a.ok() ? b : a).status().ToString());
    return o;
  }
  const bool same = a->final_params == b->final_params;
  o.passed = same && secs <= 60;
  o.summary = absl::StrFormat(
      "10 rounds, K=2: TCP loopback final params %s in-proc (sha256 %s), %.1fs",
      same ? "bit-identical to" : "DIFFER from",
      ParamsHash(b->final_params).substr(0, 16), secs);
  return o;
}

}  // namespace
}  // namespace mpfl

int main(int argc, char** argv) {
  CLI::App app{"mpfl acceptance suite"};
  int only = 0;
  bool machine = false;
  app.add_option("--criterion", only, "run one criterion (1-8)")->check(CLI::Range(1, 8));
  app.add_flag("--machine", machine, "also print a parseable criterion-1 summary");
  CLI11_PARSE(app, argc, argv);

  auto want = [&](int id) { return only == 0 || only == id; };
  bool all_passed = true;
  auto report = [&](int id, const mpfl::Outcome& o) {
    mpfl::Print(id, o);
    all_passed &= o.passed;
  };

  std::map<std::string, std::string> c1_csv;
  bool have_c1 = false;
  if (want(1)) {
    mpfl::EqualitySummary s = mpfl::Criterion1(mpfl::NoiseConfig{}.gamma_max, false);
    report(1, s.outcome);
    if (machine) {
      std::cout << absl::StrFormat("MUTANT round_err=%.6e final_err=%.6e\n",
                                   s.worst_round, s.worst_final);
    }
    c1_csv = s.csv;
    have_c1 = true;
    if (!machine) {
      mpfl::EqualitySummary info = mpfl::Criterion1(10.0, true);
      std::cout << absl::StrFormat(
          "INFO (not counted): same runs with |gamma| <= 10: per-round max rel err %.3e\n",
          info.worst_round);
      for (const std::string& d : info.outcome.details) std::cout << "    " << d << "\n";
    }
  }
  if (want(2)) report(2, mpfl::Criterion2());
  if (want(3)) report(3, mpfl::Criterion3());
  if (want(4)) report(4, mpfl::Criterion4());
  if (want(5)) report(5, mpfl::Criterion5());
  if (want(6)) report(6, mpfl::Criterion6());
  if (want(7)) report(7, mpfl::Criterion7(have_c1 ? &c1_csv : nullptr));
#ifdef MPFL_MUTANT_BINARY
  if (want(8)) report(8, mpfl::Criterion8(MPFL_MUTANT_BINARY));
#else
  if (want(8)) {
    report(8, mpfl::Outcome{false, "this binary was built without a mutant", {}});
  }
#endif
  return all_passed ? 0 : 1;
}
