// Copyright 2026 The stylevc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stylevc/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "stylevc/errors.hpp"

namespace stylevc {

namespace {

constexpr char kMagic[8] = {'S', 'V', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 4;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  void tensor(const torch::Tensor& t) {
    pod<std::uint8_t>(t.defined() ? 1 : 0);
    if (!t.defined()) return;
    auto c = t.detach().contiguous();
    pod<std::int8_t>(static_cast<std::int8_t>(c.scalar_type()));
    pod<std::uint32_t>(static_cast<std::uint32_t>(c.dim()));
    for (auto d : c.sizes()) pod<std::int64_t>(d);
    const auto nbytes = static_cast<std::uint64_t>(c.numel() * c.element_size());
    pod<std::uint64_t>(nbytes);
    buf_.append(static_cast<const char*>(c.data_ptr()), nbytes);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  torch::Tensor tensor() {
    if (pod<std::uint8_t>() == 0) return {};
    const auto type = static_cast<torch::ScalarType>(pod<std::int8_t>());
    const auto ndim = pod<std::uint32_t>();
    if (ndim > 16) throw CheckpointError("corrupt tensor record (rank " + std::to_string(ndim) + ")");
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) d = pod<std::int64_t>();
    const auto nbytes = pod<std::uint64_t>();
    need(nbytes);
    auto t = torch::empty(shape, torch::TensorOptions().dtype(type));
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != nbytes)
      throw CheckpointError("corrupt tensor record (size mismatch)");
    std::memcpy(t.data_ptr(), data_.data() + pos_, nbytes);
    pos_ += nbytes;
    return t;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw CheckpointError("checkpoint payload ends early");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

void write_named(Writer& w, const std::vector<std::pair<std::string, torch::Tensor>>& named) {
  w.pod<std::uint64_t>(named.size());
  for (const auto& [name, t] : named) {
    w.str(name);
    w.tensor(t);
  }
}

void read_named(Reader& r, const std::vector<std::pair<std::string, torch::Tensor>>& into,
                const char* what) {
  const auto n = r.pod<std::uint64_t>();
  if (n != into.size())
    throw CheckpointError(std::string(what) + ": checkpoint has " + std::to_string(n) +
                          " tensors, model has " + std::to_string(into.size()));
  for (const auto& [name, target] : into) {
    const auto stored = r.str();
    if (stored != name)
      throw CheckpointError(std::string(what) + ": expected '" + name + "', found '" + stored + "'");
    auto t = r.tensor();
    if (!t.defined() || t.sizes() != target.sizes() || t.scalar_type() != target.scalar_type())
      throw CheckpointError(std::string(what) + ": '" + name + "' has an incompatible shape or type");
    torch::NoGradGuard guard;
    target.copy_(t);
  }
}

void write_optimizer(Writer& w, torch::optim::AdamW& opt) {
  const auto& groups = opt.param_groups();
  w.pod<std::uint64_t>(groups.size());
  for (const auto& g : groups) {
    w.pod<double>(static_cast<const torch::optim::AdamWOptions&>(g.options()).lr());
    w.pod<std::uint64_t>(g.params().size());
    for (const auto& p : g.params()) {
      auto it = opt.state().find(p.unsafeGetTensorImpl());
      if (it == opt.state().end()) {
        w.pod<std::uint8_t>(0);
        continue;
      }
      const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
      w.pod<std::uint8_t>(1);
      w.pod<std::int64_t>(s.step());
      w.tensor(s.exp_avg());
      w.tensor(s.exp_avg_sq());
      w.tensor(s.max_exp_avg_sq());
    }
  }
}

void read_optimizer(Reader& r, torch::optim::AdamW& opt, const char* what) {
  auto& groups = opt.param_groups();
  if (r.pod<std::uint64_t>() != groups.size())
    throw CheckpointError(std::string(what) + ": parameter group count differs");
  for (auto& g : groups) {
    static_cast<torch::optim::AdamWOptions&>(g.options()).lr(r.pod<double>());
    if (r.pod<std::uint64_t>() != g.params().size())
      throw CheckpointError(std::string(what) + ": parameter count differs");
    for (const auto& p : g.params()) {
      if (r.pod<std::uint8_t>() == 0) continue;
      auto s = std::make_unique<torch::optim::AdamWParamState>();
      s->step(r.pod<std::int64_t>());
      s->exp_avg(r.tensor());
      s->exp_avg_sq(r.tensor());
      if (auto m = r.tensor(); m.defined()) s->max_exp_avg_sq(m);
      if (!s->exp_avg().defined() || s->exp_avg().sizes() != p.sizes() ||
          !s->exp_avg_sq().defined() || s->exp_avg_sq().sizes() != p.sizes())
        throw CheckpointError(std::string(what) + ": optimizer moment shape differs");
      opt.state()[p.unsafeGetTensorImpl()] = std::move(s);
    }
  }
}

std::uint32_t crc_of(std::string_view s) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(s.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(s.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string checkpoint_bytes(const TrainState& st) {
  Writer payload;
  nlohmann::json meta{{"config", st.cfg.to_json()},
                      {"step", st.step},
                      {"epoch", st.epoch},
                      {"rng", st.rng.serialize()}};
  payload.str(meta.dump());
  write_named(payload, st.generator_parameters());
  write_named(payload, st.discriminator_parameters());
  write_named(payload, st.buffers());
  write_optimizer(payload, *st.opt_gen);
  write_optimizer(payload, *st.opt_disc);

  Writer out;
  out.bytes().append(kMagic, sizeof(kMagic));
  out.pod<std::uint32_t>(kCheckpointVersion);
  out.pod<std::uint64_t>(payload.bytes().size());
  out.pod<std::uint32_t>(crc_of(payload.bytes()));
  out.bytes().append(payload.bytes());
  return std::move(out.bytes());
}

TrainState checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic or too short)");
  Reader header(std::string_view(bytes).substr(sizeof(kMagic), kHeaderSize - sizeof(kMagic)));
  const auto version = header.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " is not supported (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto size = header.pod<std::uint64_t>();
  const auto crc = header.pod<std::uint32_t>();
  if (bytes.size() - kHeaderSize != size)
    throw CheckpointError("checkpoint is truncated or padded: header declares " + std::to_string(size) +
                          " payload bytes, file holds " + std::to_string(bytes.size() - kHeaderSize));
  const std::string_view payload = std::string_view(bytes).substr(kHeaderSize);
  if (crc_of(payload) != crc) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(payload);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is unreadable: ") + e.what());
  }
  TrainState st(Config::from_json(meta.at("config")));
  st.step = meta.at("step").get<std::int64_t>();
  st.epoch = meta.at("epoch").get<std::int64_t>();
  st.rng = Rng::deserialize(meta.at("rng").get<std::string>());
  read_named(r, st.generator_parameters(), "generator parameters");
  read_named(r, st.discriminator_parameters(), "discriminator parameters");
  read_named(r, st.buffers(), "buffers");
  read_optimizer(r, *st.opt_gen, "generator optimizer");
  read_optimizer(r, *st.opt_disc, "discriminator optimizer");
  if (!r.done()) throw CheckpointError("checkpoint has trailing payload bytes");
  return st;
}

void save_checkpoint(const TrainState& st, const std::string& path) {
  namespace fs = std::filesystem;
  const auto bytes = checkpoint_bytes(st);
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

}  // namespace stylevc
