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

// mpfl: train, verify, attack, serve and join.
//
// Exit codes: 0 ok, 1 verification failure, 2 ingestion error, 3 protocol
// error, 4 timeout, 5 usage error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "mpfl/attack.h"
#include "mpfl/config.h"
#include "mpfl/training.h"
#include "mpfl/transport.h"
#include "mpfl/verify.h"

namespace {

enum ExitCode {
  kOk = 0,
  kVerifyFailed = 1,
  kIngestion = 2,
  kProtocol = 3,
  kTimeout = 4,
  kUsage = 5,
};

bool Verbose() {
  const char* level = std::getenv("MPFL_LOG_LEVEL");
  return level != nullptr && std::string(level) != "quiet" &&
         std::string(level) != "error";
}

void Log(const std::string& line) {
  if (Verbose()) std::cerr << line << "\n";
}

int Fail(int code, const absl::Status& status) {
  std::cerr << "mpfl: " << status << "\n";
  return code;
}

int RunFailure(const absl::Status& status) {
  if (absl::IsDeadlineExceeded(status)) return Fail(kTimeout, status);
  if (absl::IsInvalidArgument(status)) return Fail(kUsage, status);
  return Fail(kProtocol, status);
}

struct Overrides {
  std::string mode;
  int64_t rounds = -1;
  int64_t seed = -1;
  int64_t clients = -1;
  int64_t m = -1;
  double learning_rate = -1.0;
  std::string metrics;
  std::string manifest;
  std::string host;
  int port = -1;
  bool deterministic = false;
};

void AddOverrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--mode", o.mode, "plain or perturbed");
  cmd->add_option("--rounds", o.rounds, "number of rounds E");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--clients", o.clients, "number of clients K");
  cmd->add_option("--m", o.m, "number of output groups");
  cmd->add_option("--lr", o.learning_rate, "learning rate");
  cmd->add_option("--metrics", o.metrics, "metrics CSV path");
  cmd->add_option("--manifest", o.manifest, "manifest JSON path");
  cmd->add_option("--host", o.host, "TCP host");
  cmd->add_option("--port", o.port, "TCP port");
  cmd->add_flag("--deterministic", o.deterministic,
                "write wall_ms as 0 so metrics are reproducible");
}

absl::StatusOr<mpfl::RunConfig> ResolveConfig(const std::string& path,
                                              const Overrides& o) {
  absl::StatusOr<mpfl::RunConfig> cfg = mpfl::LoadConfig(path);
  if (!cfg.ok()) return cfg;
  if (!o.mode.empty()) {
    absl::StatusOr<mpfl::Mode> mode = mpfl::ParseMode(o.mode);
    if (!mode.ok()) return mode.status();
    cfg->mode = *mode;
  }
  if (o.rounds >= 0) cfg->rounds = static_cast<uint64_t>(o.rounds);
  if (o.seed >= 0) cfg->seed = static_cast<uint64_t>(o.seed);
  if (o.clients >= 0) cfg->clients = static_cast<size_t>(o.clients);
  if (o.m >= 0) cfg->m = static_cast<size_t>(o.m);
  if (o.learning_rate >= 0.0) cfg->learning_rate = o.learning_rate;
  if (!o.metrics.empty()) cfg->metrics_csv = o.metrics;
  if (!o.manifest.empty()) cfg->manifest = o.manifest;
  if (!o.host.empty()) cfg->transport.host = o.host;
  if (o.port >= 0) cfg->transport.port = static_cast<uint16_t>(o.port);
  if (o.deterministic) cfg->record_wall_clock = false;
  absl::Status st = cfg->Validate();
  if (!st.ok()) return st;
  return cfg;
}

int LoadConfigOrFail(const std::string& path, const Overrides& o,
                     mpfl::RunConfig& cfg) {
  absl::StatusOr<mpfl::RunConfig> c = ResolveConfig(path, o);
  if (!c.ok()) {
    return Fail(absl::IsNotFound(c.status()) ? kIngestion : kUsage, c.status());
  }
  cfg = *std::move(c);
  return kOk;
}

int LoadDataOrFail(const mpfl::RunConfig& cfg, mpfl::PreparedData& data) {
  absl::StatusOr<mpfl::PreparedData> d = mpfl::LoadRunData(cfg);
  if (!d.ok()) return Fail(kIngestion, d.status());
  data = *std::move(d);
  return kOk;
}

int Finish(const mpfl::RunConfig& cfg,
           const absl::StatusOr<mpfl::TrainingResult>& result) {
  if (!result.ok()) return RunFailure(result.status());
  absl::Status st = mpfl::WriteOutputs(cfg, *result);
  if (!st.ok()) return Fail(kUsage, st);
  Log(absl::StrCat("completed ", result->records.size(), " rounds, params ",
                   mpfl::ParamsHash(result->final_params)));
  return kOk;
}

int CmdTrain(const std::string& config_path, const Overrides& o) {
  mpfl::RunConfig cfg;
  mpfl::PreparedData data;
  if (int rc = LoadConfigOrFail(config_path, o, cfg); rc != kOk) return rc;
  if (int rc = LoadDataOrFail(cfg, data); rc != kOk) return rc;
  Log(absl::StrCat("training ", mpfl::ModeName(cfg.mode), " for ", cfg.rounds,
                   " rounds with ", cfg.clients, " clients"));
  auto observer = [](uint64_t round, const mpfl::MlpParams&,
                     const mpfl::GradientSet&) {
    Log(absl::StrCat("round ", round, " done"));
  };
  return Finish(cfg, cfg.transport.tcp
                         ? mpfl::RunTcpLoopback(cfg, data, observer)
                         : mpfl::RunInProc(cfg, data, observer));
}

int CmdServe(const std::string& config_path, const Overrides& o) {
  mpfl::RunConfig cfg;
  mpfl::PreparedData data;
  if (int rc = LoadConfigOrFail(config_path, o, cfg); rc != kOk) return rc;
  if (int rc = LoadDataOrFail(cfg, data); rc != kOk) return rc;
  auto listener = mpfl::TcpListener::Listen(cfg.transport.host, cfg.transport.port,
                                            cfg.transport.max_frame_bytes);
  if (!listener.ok()) return Fail(kProtocol, listener.status());
  std::cout << "listening on " << cfg.transport.host << ":" << (*listener)->port()
            << std::endl;
  std::vector<std::unique_ptr<mpfl::Connection>> accepted;
  for (size_t k = 0; k < cfg.clients; ++k) {
    auto conn = (*listener)->Accept(mpfl::Millis(cfg.transport.accept_timeout_ms));
    if (!conn.ok()) return RunFailure(conn.status());
    accepted.push_back(*std::move(conn));
  }
  auto clients = mpfl::Handshake(std::move(accepted), cfg.clients,
                                 mpfl::Millis(cfg.transport.round_timeout_ms));
  if (!clients.ok()) return RunFailure(clients.status());
  return Finish(cfg, mpfl::RunServer(cfg, *clients, data.splits.train));
}

int CmdJoin(const std::string& config_path, const Overrides& o,
            uint32_t client_id, uint32_t proto_version) {
  mpfl::RunConfig cfg;
  mpfl::PreparedData data;
  if (int rc = LoadConfigOrFail(config_path, o, cfg); rc != kOk) return rc;
  if (client_id >= cfg.clients) {
    return Fail(kUsage, absl::InvalidArgumentError(absl::StrCat(
                            "client id ", client_id, " >= clients ", cfg.clients)));
  }
  if (int rc = LoadDataOrFail(cfg, data); rc != kOk) return rc;
  auto conn = mpfl::TcpConnect(cfg.transport.host, cfg.transport.port,
                               mpfl::Millis(cfg.transport.connect_timeout_ms),
                               cfg.transport.max_frame_bytes);
  if (!conn.ok()) return RunFailure(conn.status());
  mpfl::ClientOptions opts = mpfl::ClientOptionsFor(cfg, client_id);
  opts.proto_version = proto_version;
  absl::Status st = mpfl::RunClient(**conn, data.shards[client_id], opts);
  if (!st.ok()) return RunFailure(st);
  return kOk;
}

int CmdVerify(uint64_t seed, size_t instances, bool finite_differences,
              double gamma_max) {
  mpfl::VerifyOptions opts;
  if (gamma_max > 0.0) opts.noise.gamma_max = gamma_max;
  opts.seed = seed;
  opts.instances = instances;
  opts.finite_differences = finite_differences;
  mpfl::VerifyReport report = mpfl::RunVerification(opts);
  std::cout << report.ToText();
  return report.passed() ? kOk : kVerifyFailed;
}

int Emit(const std::string& json, const std::string& out_path) {
  std::cout << json << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << json << "\n";
    if (!out) {
      return Fail(kUsage, absl::PermissionDeniedError(
                              absl::StrCat("cannot write ", out_path)));
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accuracy-lossless model perturbation for federated learning"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  CLI::App* train = app.add_subcommand("train", "run a whole training job");
  train->add_option("--config", config_path, "run config JSON")->required();
  AddOverrides(train, overrides);

  CLI::App* serve = app.add_subcommand("serve", "run the server role over TCP");
  serve->add_option("--config", config_path, "run config JSON")->required();
  AddOverrides(serve, overrides);

  uint32_t client_id = 0;
  uint32_t proto_version = mpfl::kProtocolVersion;
  CLI::App* join = app.add_subcommand("join", "run one client role over TCP");
  join->add_option("--config", config_path, "run config JSON")->required();
  join->add_option("--client-id", client_id, "client index")->required();
  join->add_option("--proto-version", proto_version, "protocol version to announce");
  AddOverrides(join, overrides);

  uint64_t verify_seed = 1;
  size_t verify_instances = 50;
  bool no_fd = false;
  CLI::App* verify = app.add_subcommand("verify", "run the invariant battery");
  verify->add_option("--seed", verify_seed, "base seed");
  verify->add_option("--instances", verify_instances, "random instances");
  verify->add_flag("--no-finite-differences", no_fd, "skip the slow check");
  double verify_gamma_max = 0.0;
  verify->add_option("--gamma-max", verify_gamma_max,
                     "upper bound of |gamma| (default 1e3)");

  CLI::App* attack = app.add_subcommand("attack", "run an attack experiment");
  attack->require_subcommand(1);
  std::string out_path;
  uint64_t attack_seed = 1;
  size_t count = 100;
  std::vector<size_t> dims = {4, 8, 6, 3};
  attack->add_option("--out", out_path, "also write the JSON report here");
  attack->add_option("--seed", attack_seed, "seed");

  CLI::App* ambiguity = attack->add_subcommand("ambiguity", "parameter witnesses");
  ambiguity->add_option("--count", count, "witnesses");
  ambiguity->add_option("--dims", dims, "layer widths")->delimiter(',');

  size_t n_l = 10, m = 10, trials = 10000;
  std::string strategy = "all";
  CLI::App* argmax = attack->add_subcommand("argmax", "prediction guessing");
  argmax->add_option("--nl", n_l, "output width");
  argmax->add_option("--m", m, "number of groups");
  argmax->add_option("--trials", trials, "Monte-Carlo trials");
  argmax->add_option("--strategy", strategy, "adversary name or 'all'");

  CLI::App* grad = attack->add_subcommand("grad-ambiguity", "gradient witnesses");
  grad->add_option("--count", count, "alternative secrets");
  grad->add_option("--dims", dims, "layer widths")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (*train) return CmdTrain(config_path, overrides);
  if (*serve) return CmdServe(config_path, overrides);
  if (*join) return CmdJoin(config_path, overrides, client_id, proto_version);
  if (*verify) return CmdVerify(verify_seed, verify_instances, !no_fd, verify_gamma_max);

  if (*ambiguity) {
    auto r = mpfl::AmbiguityExperiment(dims, count, attack_seed);
    if (!r.ok()) return Fail(kUsage, r.status());
    nlohmann::ordered_json j;
    j["kind"] = "ambiguity";
    j["count"] = r->count;
    j["max_reproduction_error"] = r->max_reproduction_error;
    j["min_pairwise_distance"] = r->min_pairwise_distance;
    j["min_distance_to_truth"] = r->min_distance_to_truth;
    j["min_output_gap"] = r->min_output_gap;
    j["valid"] = r->ok;
    if (int rc = Emit(j.dump(), out_path); rc != kOk) return rc;
    return r->ok ? kOk : kVerifyFailed;
  }
  if (*grad) {
    auto r = mpfl::GradientAmbiguityExperiment(dims, count, attack_seed);
    if (!r.ok()) return Fail(kUsage, r.status());
    nlohmann::ordered_json j;
    j["kind"] = "grad-ambiguity";
    j["count"] = r->count;
    j["max_reproduction_error"] = r->max_reproduction_error;
    j["min_pairwise_distance"] = r->min_pairwise_distance;
    j["true_secret_error"] = r->true_secret_error;
    j["valid"] = r->ok;
    if (int rc = Emit(j.dump(), out_path); rc != kOk) return rc;
    return r->ok ? kOk : kVerifyFailed;
  }
  if (*argmax) {
    std::vector<std::string> names =
        strategy == "all" ? mpfl::AdversaryNames() : std::vector<std::string>{strategy};
    nlohmann::ordered_json reports = nlohmann::ordered_json::array();
    bool within = true;
    for (const std::string& name : names) {
      auto adversary = mpfl::MakeAdversary(name);
      if (!adversary.ok()) return Fail(kUsage, adversary.status());
      auto r = mpfl::ArgmaxGuessExperiment(n_l, m, trials, **adversary,
                                           attack_seed, {},
                                           mpfl::Execution::kParallel);
      if (!r.ok()) return Fail(kUsage, r.status());
      within = within && (!r->applicable || r->success_rate <= r->bound);
      reports.push_back(nlohmann::ordered_json::parse(r->ToJson()));
    }
    const std::string json = reports.size() == 1 ? reports[0].dump() : reports.dump();
    if (int rc = Emit(json, out_path); rc != kOk) return rc;
    return within ? kOk : kVerifyFailed;
  }
  return kUsage;
}
