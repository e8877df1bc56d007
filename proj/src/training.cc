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

#include "mpfl/training.h"

#include <openssl/evp.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <thread>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "json.hpp"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

std::string Sha256Hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) absl::StrAppendFormat(&hex, "%02x", digest[i]);
  return hex;
}

std::mt19937_64 StreamRng(uint64_t seed, uint64_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream)};
  return std::mt19937_64(seq);
}

constexpr uint64_t kInitStream = 1;
constexpr uint64_t kNoiseStream = 2;

absl::Status SendAll(std::span<const std::unique_ptr<Connection>> clients,
                     const Message& msg) {
  for (const auto& c : clients) MPFL_RETURN_IF_ERROR(c->Send(msg));
  return absl::OkStatus();
}

void AbortAll(std::span<const std::unique_ptr<Connection>> clients,
              uint64_t round_id, const absl::Status& why) {
  for (const auto& c : clients) {
    c->Send(AbortMsg{round_id, std::string(why.message())}).IgnoreError();
  }
}

absl::StatusOr<ClientUpdate> AwaitUpdate(Connection& c, uint32_t client_id,
                                         uint64_t round_id, Millis timeout) {
  absl::StatusOr<Message> msg = c.Receive(timeout);
  if (!msg.ok()) {
    if (absl::IsUnavailable(msg.status())) {
      return absl::AbortedError(absl::StrCat("client ", client_id,
                                             " disconnected in round ", round_id));
    }
    if (absl::IsDeadlineExceeded(msg.status())) {
      return absl::DeadlineExceededError(absl::StrCat(
          "no update from client ", client_id, " in round ", round_id));
    }
    return msg.status();
  }
  if (auto* abort = std::get_if<AbortMsg>(&*msg)) {
    return absl::AbortedError(
        absl::StrCat("client ", client_id, " aborted: ", abort->reason));
  }
  auto* update = std::get_if<UpdateMsg>(&*msg);
  if (update == nullptr) {
    return absl::FailedPreconditionError(absl::StrCat(
        "expected update from client ", client_id, ", got ", MessageKind(*msg)));
  }
  if (update->update.client_id != client_id) {
    return absl::FailedPreconditionError(
        absl::StrCat("connection of client ", client_id,
                     " carried an update for client ", update->update.client_id));
  }
  return std::move(update->update);
}

absl::StatusOr<TrainingResult> RunRounds(
    const RunConfig& config, std::span<const std::unique_ptr<Connection>> clients,
    std::span<const Sample> train, const RoundObserver& observer) {
  TrainingResult result;
  MPFL_ASSIGN_OR_RETURN(result.initial, InitialParams(config));
  MlpParams w = result.initial;
  std::mt19937_64 noise_rng = StreamRng(config.seed, kNoiseStream);
  std::set<uint32_t> expected;
  for (uint32_t k = 0; k < clients.size(); ++k) expected.insert(k);
  const Millis timeout(config.transport.round_timeout_ms);

  for (uint64_t round = 1; round <= config.rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();
    RoundRecord record;
    record.round_id = round;
    record.mode = config.mode;
    MPFL_ASSIGN_OR_RETURN(record.train_loss, MeanLoss(w, train));

    absl::StatusOr<RoundState> state =
        config.mode == Mode::kPerturbed
            ? RoundState::BeginPerturbed(w, round, config.m, config.noise,
                                         noise_rng, expected)
            : RoundState::BeginPlain(w, round, expected);
    if (!state.ok()) return state.status();
    MPFL_RETURN_IF_ERROR(
        SendAll(clients, BroadcastMsg{round, config.mode, state->broadcast()}));
    for (uint32_t k = 0; k < clients.size(); ++k) {
      absl::StatusOr<ClientUpdate> update =
          AwaitUpdate(*clients[k], k, round, timeout);
      absl::Status st = update.ok() ? state->Receive(*std::move(update))
                                    : update.status();
      if (!st.ok()) {
        AbortAll(clients, round, st);
        return st;
      }
    }
    GradientSet applied;
    MPFL_ASSIGN_OR_RETURN(MlpParams next,
                          state->RecoverAndUpdate(w, config.learning_rate, &applied));
    for (const Matrix& g : applied.layers) {
      record.grad_norms.push_back(FrobeniusNorm(g));
    }
    if (observer) observer(round, w, applied);
    w = std::move(next);
    MPFL_RETURN_IF_ERROR(SendAll(clients, RoundDoneMsg{round}));
    if (config.record_wall_clock) {
      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    }
    result.records.push_back(std::move(record));
  }
  result.final_params = std::move(w);
  return result;
}

// Joins client threads and merges their status into the server's.
absl::StatusOr<TrainingResult> Finish(absl::StatusOr<TrainingResult> server,
                                      std::vector<std::thread>& threads,
                                      std::vector<absl::Status>& client_status) {
  for (auto& t : threads) t.join();
  if (!server.ok()) return server;
  for (size_t k = 0; k < client_status.size(); ++k) {
    if (!client_status[k].ok()) {
      return absl::Status(client_status[k].code(),
                          absl::StrCat("client ", k, ": ",
                                       client_status[k].message()));
    }
  }
  return server;
}

}  // namespace

absl::StatusOr<PreparedData> LoadRunData(const RunConfig& config) {
  const DatasetSpec& spec = config.dataset;
  absl::StatusOr<Dataset> ds;
  if (spec.kind == "synthetic_classification") {
    ds = SynthClassification(spec.features, spec.outputs, spec.samples,
                             spec.seed, spec.cluster_spread);
  } else if (spec.kind == "synthetic_regression") {
    ds = SynthRegression(spec.features, spec.outputs, spec.samples, spec.seed);
  } else {
    ds = LoadCsv(spec.path, spec.schema);
  }
  if (!ds.ok()) return ds.status();
  if (!config.dims.empty() && (ds->feature_dim != config.dims.front() ||
                               ds->target_dim != config.dims.back())) {
    return absl::InvalidArgumentError(absl::StrCat(
        "dataset has ", ds->feature_dim, " features and ", ds->target_dim,
        " targets but dims are ", config.dims.front(), " -> ",
        config.dims.back()));
  }
  return PrepareSplits(*ds, config.clients, config.seed,
                       spec.normalization);
}

absl::StatusOr<MlpParams> InitialParams(const RunConfig& config) {
  MPFL_ASSIGN_OR_RETURN(LayerDims dims, LayerDims::Create(config.dims));
  std::mt19937_64 rng = StreamRng(config.seed, kInitStream);
  return InitParams(dims, rng, config.init_stddev);
}

absl::StatusOr<std::vector<std::unique_ptr<Connection>>> Handshake(
    std::vector<std::unique_ptr<Connection>> connections, size_t num_clients,
    Millis timeout) {
  std::vector<std::unique_ptr<Connection>> by_id(num_clients);
  for (auto& c : connections) {
    MPFL_ASSIGN_OR_RETURN(Message msg, c->Receive(timeout));
    auto* hello = std::get_if<HelloMsg>(&msg);
    absl::Status st;
    if (hello == nullptr) {
      st = absl::FailedPreconditionError(
          absl::StrCat("expected hello, got ", MessageKind(msg)));
    } else if (hello->proto_version != kProtocolVersion) {
      st = absl::FailedPreconditionError(
          absl::StrCat("client ", hello->client_id, " speaks protocol version ",
                       hello->proto_version, ", server speaks ",
                       kProtocolVersion));
    } else if (hello->client_id >= num_clients) {
      st = absl::FailedPreconditionError(
          absl::StrCat("client id ", hello->client_id, " out of range"));
    } else if (by_id[hello->client_id] != nullptr) {
      st = absl::FailedPreconditionError(
          absl::StrCat("duplicate client id ", hello->client_id));
    }
    if (!st.ok()) {
      c->Send(AbortMsg{0, std::string(st.message())}).IgnoreError();
      c->Close();
      return st;
    }
    by_id[hello->client_id] = std::move(c);
  }
  for (size_t k = 0; k < num_clients; ++k) {
    if (by_id[k] == nullptr) {
      return absl::FailedPreconditionError(
          absl::StrCat("client ", k, " never connected"));
    }
  }
  return by_id;
}

absl::StatusOr<TrainingResult> RunServer(
    const RunConfig& config, std::span<const std::unique_ptr<Connection>> clients,
    std::span<const Sample> train, const RoundObserver& observer) {
  absl::StatusOr<TrainingResult> result =
      RunRounds(config, clients, train, observer);
  for (const auto& c : clients) c->Close();
  return result;
}

absl::Status RunClient(Connection& connection, std::span<const Sample> shard,
                       const ClientOptions& options) {
  MPFL_RETURN_IF_ERROR(
      connection.Send(HelloMsg{options.client_id, options.proto_version}));
  bool mid_round = false;
  while (true) {
    absl::StatusOr<Message> msg = connection.Receive(options.timeout);
    if (!msg.ok()) {
      if (absl::IsUnavailable(msg.status()) && !mid_round) {
        connection.Close();
        return absl::OkStatus();
      }
      connection.Close();
      return msg.status();
    }
    if (auto* abort = std::get_if<AbortMsg>(&*msg)) {
      connection.Close();
      return absl::AbortedError(absl::StrCat("server aborted round ",
                                             abort->round_id, ": ", abort->reason));
    }
    if (std::get_if<RoundDoneMsg>(&*msg) != nullptr) {
      mid_round = false;
      continue;
    }
    auto* broadcast = std::get_if<BroadcastMsg>(&*msg);
    if (broadcast == nullptr) {
      connection.Close();
      return absl::FailedPreconditionError(
          absl::StrCat("unexpected ", MessageKind(*msg), " from server"));
    }
    mid_round = true;
    const uint64_t round = broadcast->round_id;
    std::vector<Sample> batch =
        SelectBatch(shard, options.batch_size, options.seed, round,
                    options.client_id);
    absl::StatusOr<ClientUpdate> update =
        broadcast->mode == Mode::kPerturbed
            ? LocalUpdate(broadcast->model, batch, options.client_id,
                          options.exec)
            : LocalUpdatePlain(MlpParams{broadcast->model.layers}, round,
                               batch, options.client_id, options.exec);
    if (!update.ok()) {
      connection.Send(AbortMsg{round, std::string(update.status().message())})
          .IgnoreError();
      connection.Close();
      return update.status();
    }
    MPFL_RETURN_IF_ERROR(connection.Send(UpdateMsg{round, *std::move(update)}));
  }
}

ClientOptions ClientOptionsFor(const RunConfig& config, uint32_t client_id) {
  ClientOptions o;
  o.client_id = client_id;
  o.batch_size = config.batch_size;
  o.seed = config.seed;
  o.exec = config.parallel ? Execution::kParallel : Execution::kSerial;
  o.timeout = Millis(config.transport.round_timeout_ms);
  return o;
}

absl::StatusOr<TrainingResult> RunInProc(const RunConfig& config,
                                         const PreparedData& data,
                                         const RoundObserver& observer) {
  if (data.shards.size() != config.clients) {
    return absl::InvalidArgumentError("shard count does not match clients");
  }
  std::vector<std::unique_ptr<Connection>> server_ends;
  std::vector<std::thread> threads;
  std::vector<absl::Status> client_status(config.clients);
  for (uint32_t k = 0; k < config.clients; ++k) {
    auto [server_end, client_end] =
        MakeInProcPair(config.transport.max_frame_bytes);
    server_ends.push_back(std::move(server_end));
    threads.emplace_back([&, k, conn = std::move(client_end)]() mutable {
      client_status[k] =
          RunClient(*conn, data.shards[k], ClientOptionsFor(config, k));
    });
  }
  absl::StatusOr<std::vector<std::unique_ptr<Connection>>> clients =
      Handshake(std::move(server_ends), config.clients,
                Millis(config.transport.round_timeout_ms));
  absl::StatusOr<TrainingResult> result =
      clients.ok() ? RunServer(config, *clients, data.splits.train, observer)
                   : absl::StatusOr<TrainingResult>(clients.status());
  return Finish(std::move(result), threads, client_status);
}

absl::StatusOr<TrainingResult> RunTcpLoopback(const RunConfig& config,
                                              const PreparedData& data,
                                              const RoundObserver& observer) {
  if (data.shards.size() != config.clients) {
    return absl::InvalidArgumentError("shard count does not match clients");
  }
  const size_t max_frame = config.transport.max_frame_bytes;
  MPFL_ASSIGN_OR_RETURN(std::unique_ptr<TcpListener> listener,
                        TcpListener::Listen("127.0.0.1", 0, max_frame));
  const uint16_t port = listener->port();
  std::vector<std::thread> threads;
  std::vector<absl::Status> client_status(config.clients);
  for (uint32_t k = 0; k < config.clients; ++k) {
    threads.emplace_back([&, k]() {
      absl::StatusOr<std::unique_ptr<Connection>> conn = TcpConnect(
          "127.0.0.1", port, Millis(config.transport.connect_timeout_ms),
          max_frame);
      client_status[k] =
          conn.ok() ? RunClient(**conn, data.shards[k], ClientOptionsFor(config, k))
                    : conn.status();
    });
  }
  std::vector<std::unique_ptr<Connection>> accepted;
  absl::Status accept_status;
  for (size_t k = 0; k < config.clients && accept_status.ok(); ++k) {
    absl::StatusOr<std::unique_ptr<Connection>> conn =
        listener->Accept(Millis(config.transport.accept_timeout_ms));
    if (conn.ok()) {
      accepted.push_back(*std::move(conn));
    } else {
      accept_status = conn.status();
    }
  }
  absl::StatusOr<TrainingResult> result = absl::UnknownError("not run");
  if (!accept_status.ok()) {
    result = accept_status;
    for (auto& c : accepted) c->Close();
  } else {
    absl::StatusOr<std::vector<std::unique_ptr<Connection>>> clients =
        Handshake(std::move(accepted), config.clients,
                  Millis(config.transport.round_timeout_ms));
    result = clients.ok()
                 ? RunServer(config, *clients, data.splits.train, observer)
                 : absl::StatusOr<TrainingResult>(clients.status());
  }
  return Finish(std::move(result), threads, client_status);
}

std::string MetricsCsv(std::span<const RoundRecord> records, size_t num_layers) {
  std::string out = "round,mode,loss";
  for (size_t l = 1; l <= num_layers; ++l) absl::StrAppend(&out, ",grad_norm_l", l);
  absl::StrAppend(&out, ",wall_ms\n");
  for (const RoundRecord& r : records) {
    absl::StrAppendFormat(&out, "%d,%s,%.17g", r.round_id, ModeName(r.mode),
                          r.train_loss);
    for (double g : r.grad_norms) absl::StrAppendFormat(&out, ",%.17g", g);
    absl::StrAppendFormat(&out, ",%.3f\n", r.wall_ms);
  }
  return out;
}

std::string ParamsHash(const MlpParams& params) {
  std::string bytes;
  for (const Matrix& m : params.layers) {
    for (double v : m.data()) {
      uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>(bits >> (8 * b)));
    }
  }
  return Sha256Hex(bytes);
}

std::string RoundedParamsHash(const MlpParams& params) {
  std::string text;
  for (const Matrix& m : params.layers) {
    for (double v : m.data()) absl::StrAppendFormat(&text, "%.5e\n", v);
  }
  return Sha256Hex(text);
}

std::string ManifestJson(const RunConfig& config, const TrainingResult& result) {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(config.ToJson());
  j["seed"] = config.seed;
  j["rounds_completed"] = result.records.size();
  j["final_params_sha256"] = ParamsHash(result.final_params);
  j["final_params_sha256_rounded"] = RoundedParamsHash(result.final_params);
  j["final_loss"] =
      result.records.empty() ? nullptr : nlohmann::ordered_json(result.records.back().train_loss);
  return j.dump(2) + "\n";
}

absl::Status WriteOutputs(const RunConfig& config, const TrainingResult& result) {
  auto write = [](const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) return absl::PermissionDeniedError(absl::StrCat("cannot write ", path));
    out << body;
    out.close();
    if (!out) return absl::DataLossError(absl::StrCat("short write to ", path));
    return absl::OkStatus();
  };
  if (!config.metrics_csv.empty()) {
    MPFL_RETURN_IF_ERROR(write(
        config.metrics_csv, MetricsCsv(result.records, config.dims.size() - 1)));
  }
  if (!config.manifest.empty()) {
    MPFL_RETURN_IF_ERROR(write(config.manifest, ManifestJson(config, result)));
  }
  return absl::OkStatus();
}

}  // namespace mpfl
