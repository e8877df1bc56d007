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

#include "mpfl/wire.h"

#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "mpfl/status_macros.h"

namespace mpfl {
namespace {

using Json = nlohmann::ordered_json;

Json MatrixToJson(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json data = Json::array();
  for (double v : m.data()) data.push_back(v);
  j["data"] = std::move(data);
  return j;
}

Json VectorToJson(const Vector& v) {
  Json arr = Json::array();
  for (double x : v) arr.push_back(x);
  return arr;
}

Json PartitionToJson(const Partition& p) {
  Json groups = Json::array();
  for (const auto& g : p.groups()) groups.push_back(g);
  return groups;
}

Json ModelToJson(const PerturbedModel& pm) {
  Json j;
  Json layers = Json::array();
  for (const Matrix& m : pm.layers) layers.push_back(MatrixToJson(m));
  j["layers"] = std::move(layers);
  j["r_add"] = VectorToJson(pm.r_add);
  j["partition"] = PartitionToJson(pm.partition);
  return j;
}

Json UpdateToJson(const ClientUpdate& u) {
  Json j;
  j["client_id"] = u.client_id;
  j["sample_count"] = u.sample_count;
  Json layers = Json::array();
  for (const LayerUpdate& l : u.layers) {
    Json lj;
    lj["g_hat"] = MatrixToJson(l.g_hat);
    Json sigma = Json::array();
    for (const Matrix& s : l.sigma_tilde) sigma.push_back(MatrixToJson(s));
    lj["sigma_tilde"] = std::move(sigma);
    lj["beta"] = MatrixToJson(l.beta);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

// Decoding throws SchemaError for structural problems; the public entry
// points translate it into a status.
struct SchemaError {
  std::string what;
};

const Json& Field(const Json& obj, const char* key) {
  if (!obj.is_object()) throw SchemaError{absl::StrCat("expected object around '", key, "'")};
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError{absl::StrCat("missing field '", key, "'")};
  return *it;
}

uint64_t AsUnsigned(const Json& j, const char* what) {
  if (!j.is_number_unsigned()) {
    throw SchemaError{absl::StrCat("'", what, "' must be an unsigned integer")};
  }
  return j.get<uint64_t>();
}

double AsDouble(const Json& j) {
  if (!j.is_number()) throw SchemaError{"expected a number"};
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError{"non-finite number"};
  return v;
}

const Json& AsArray(const Json& j, const char* what) {
  if (!j.is_array()) throw SchemaError{absl::StrCat("'", what, "' must be an array")};
  return j;
}

Matrix MatrixFromJson(const Json& j) {
  const uint64_t rows = AsUnsigned(Field(j, "rows"), "rows");
  const uint64_t cols = AsUnsigned(Field(j, "cols"), "cols");
  const Json& data = AsArray(Field(j, "data"), "data");
  if (data.size() != rows * cols) {
    throw SchemaError{absl::StrCat("matrix ", rows, "x", cols, " carries ",
                                   data.size(), " values")};
  }
  Matrix m(rows, cols);
  auto out = m.data();
  for (size_t k = 0; k < data.size(); ++k) out[k] = AsDouble(data[k]);
  return m;
}

Vector VectorFromJson(const Json& j, const char* what) {
  const Json& arr = AsArray(j, what);
  Vector v;
  v.reserve(arr.size());
  for (const Json& x : arr) v.push_back(AsDouble(x));
  return v;
}

PerturbedModel ModelFromJson(const Json& j, uint64_t round_id, Mode mode) {
  PerturbedModel pm;
  pm.round_id = round_id;
  for (const Json& l : AsArray(Field(j, "layers"), "layers")) {
    pm.layers.push_back(MatrixFromJson(l));
  }
  if (pm.layers.size() < 2) throw SchemaError{"model needs at least 2 layers"};
  for (size_t l = 1; l < pm.layers.size(); ++l) {
    if (pm.layers[l].cols() != pm.layers[l - 1].rows()) {
      throw SchemaError{"model layers do not chain"};
    }
  }
  pm.r_add = VectorFromJson(Field(j, "r_add"), "r_add");
  std::vector<std::vector<size_t>> groups;
  for (const Json& g : AsArray(Field(j, "partition"), "partition")) {
    std::vector<size_t> group;
    for (const Json& i : AsArray(g, "group")) group.push_back(AsUnsigned(i, "index"));
    groups.push_back(std::move(group));
  }
  const size_t out = pm.layers.back().rows();
  absl::StatusOr<Partition> partition = Partition::Create(out, std::move(groups));
  if (!partition.ok()) throw SchemaError{std::string(partition.status().message())};
  pm.partition = *std::move(partition);
  if (mode == Mode::kPerturbed && pm.r_add.size() != out) {
    throw SchemaError{"r_add does not match the output layer"};
  }
  return pm;
}

ClientUpdate UpdateFromJson(const Json& j, uint64_t round_id) {
  ClientUpdate u;
  u.round_id = round_id;
  const uint64_t id = AsUnsigned(Field(j, "client_id"), "client_id");
  if (id > UINT32_MAX) throw SchemaError{"client_id out of range"};
  u.client_id = static_cast<uint32_t>(id);
  u.sample_count = AsUnsigned(Field(j, "sample_count"), "sample_count");
  for (const Json& lj : AsArray(Field(j, "layers"), "layers")) {
    LayerUpdate l;
    l.g_hat = MatrixFromJson(Field(lj, "g_hat"));
    for (const Json& s : AsArray(Field(lj, "sigma_tilde"), "sigma_tilde")) {
      l.sigma_tilde.push_back(MatrixFromJson(s));
      if (!l.sigma_tilde.back().SameShape(l.g_hat)) {
        throw SchemaError{"sigma_tilde shape differs from g_hat"};
      }
    }
    l.beta = MatrixFromJson(Field(lj, "beta"));
    if (l.beta.size() != 0 && !l.beta.SameShape(l.g_hat)) {
      throw SchemaError{"beta shape differs from g_hat"};
    }
    u.layers.push_back(std::move(l));
  }
  return u;
}

struct ToJson {
  Json operator()(const HelloMsg& m) const {
    Json j;
    j["type"] = "hello";
    j["client_id"] = m.client_id;
    j["proto_version"] = m.proto_version;
    return j;
  }
  Json operator()(const BroadcastMsg& m) const {
    Json j;
    j["type"] = "broadcast";
    j["round_id"] = m.round_id;
    j["mode"] = ModeName(m.mode);
    j["model"] = ModelToJson(m.model);
    return j;
  }
  Json operator()(const UpdateMsg& m) const {
    Json j;
    j["type"] = "update";
    j["round_id"] = m.round_id;
    j["update"] = UpdateToJson(m.update);
    return j;
  }
  Json operator()(const RoundDoneMsg& m) const {
    Json j;
    j["type"] = "round_done";
    j["round_id"] = m.round_id;
    return j;
  }
  Json operator()(const AbortMsg& m) const {
    Json j;
    j["type"] = "abort";
    j["round_id"] = m.round_id;
    j["reason"] = m.reason;
    return j;
  }
};

}  // namespace

const char* MessageKind(const Message& msg) {
  static constexpr const char* kNames[] = {"hello", "broadcast", "update",
                                           "round_done", "abort"};
  return kNames[msg.index()];
}

std::string EncodeJson(const Message& msg) {
  return std::visit(ToJson{}, msg).dump();
}

absl::StatusOr<Message> DecodeJson(std::string_view text) {
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return absl::DataLossError("frame is not valid JSON");
  try {
    const Json& type = Field(j, "type");
    if (!type.is_string()) throw SchemaError{"'type' must be a string"};
    const std::string kind = type.get<std::string>();
    if (kind == "hello") {
      HelloMsg m;
      const uint64_t id = AsUnsigned(Field(j, "client_id"), "client_id");
      if (id > UINT32_MAX) throw SchemaError{"client_id out of range"};
      m.client_id = static_cast<uint32_t>(id);
      m.proto_version = static_cast<uint32_t>(
          AsUnsigned(Field(j, "proto_version"), "proto_version"));
      return m;
    }
    if (kind == "broadcast") {
      BroadcastMsg m;
      m.round_id = AsUnsigned(Field(j, "round_id"), "round_id");
      const Json& mode = Field(j, "mode");
      if (!mode.is_string()) throw SchemaError{"'mode' must be a string"};
      absl::StatusOr<Mode> parsed = ParseMode(mode.get<std::string>());
      if (!parsed.ok()) throw SchemaError{std::string(parsed.status().message())};
      m.mode = *parsed;
      m.model = ModelFromJson(Field(j, "model"), m.round_id, m.mode);
      return m;
    }
    if (kind == "update") {
      UpdateMsg m;
      m.round_id = AsUnsigned(Field(j, "round_id"), "round_id");
      m.update = UpdateFromJson(Field(j, "update"), m.round_id);
      return m;
    }
    if (kind == "round_done") {
      return RoundDoneMsg{AsUnsigned(Field(j, "round_id"), "round_id")};
    }
    if (kind == "abort") {
      AbortMsg m;
      m.round_id = AsUnsigned(Field(j, "round_id"), "round_id");
      const Json& reason = Field(j, "reason");
      if (!reason.is_string()) throw SchemaError{"'reason' must be a string"};
      m.reason = reason.get<std::string>();
      return m;
    }
    throw SchemaError{absl::StrCat("unknown message type '", kind, "'")};
  } catch (const SchemaError& e) {
    return absl::DataLossError(absl::StrCat("schema violation: ", e.what));
  } catch (const nlohmann::json::exception& e) {
    return absl::DataLossError(absl::StrCat("schema violation: ", e.what()));
  }
}

absl::StatusOr<size_t> ParseFrameHeader(std::string_view header,
                                        size_t max_frame_bytes) {
  if (header.size() < kFrameHeaderBytes) {
    return absl::DataLossError("truncated frame header");
  }
  size_t n = 0;
  for (size_t i = 0; i < kFrameHeaderBytes; ++i) {
    n = (n << 8) | static_cast<uint8_t>(header[i]);
  }
  if (n > max_frame_bytes) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "frame declares ", n, " bytes, limit is ", max_frame_bytes));
  }
  return n;
}

absl::StatusOr<std::string> EncodeFrame(const Message& msg,
                                        size_t max_frame_bytes) {
  const std::string body = EncodeJson(msg);
  if (body.size() > max_frame_bytes || body.size() > UINT32_MAX) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "message of ", body.size(), " bytes exceeds the frame limit"));
  }
  std::string frame(kFrameHeaderBytes, '\0');
  const uint32_t n = static_cast<uint32_t>(body.size());
  frame[0] = static_cast<char>((n >> 24) & 0xff);
  frame[1] = static_cast<char>((n >> 16) & 0xff);
  frame[2] = static_cast<char>((n >> 8) & 0xff);
  frame[3] = static_cast<char>(n & 0xff);
  frame += body;
  return frame;
}

absl::StatusOr<Message> DecodeFrame(std::string_view bytes,
                                    size_t max_frame_bytes) {
  MPFL_ASSIGN_OR_RETURN(size_t n, ParseFrameHeader(bytes, max_frame_bytes));
  if (bytes.size() - kFrameHeaderBytes < n) {
    return absl::DataLossError(absl::StrCat(
        "truncated frame: declared ", n, " bytes, have ",
        bytes.size() - kFrameHeaderBytes));
  }
  if (bytes.size() - kFrameHeaderBytes > n) {
    return absl::DataLossError("trailing bytes after frame");
  }
  return DecodeJson(bytes.substr(kFrameHeaderBytes));
}

}  // namespace mpfl
