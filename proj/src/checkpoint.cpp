#include "eesng/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "eesng/error.hpp"

namespace eesng {

namespace {

constexpr std::string_view kMagic = "EESN";

[[noreturn]] void corrupt(const std::string& what) {
  fail(ErrorCode::kCorruptCheckpoint, "corrupt checkpoint: " + what);
}

void put_u64(std::string& out, std::uint64_t v, int bytes = 8) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view take(std::uint64_t n) {
    need(n);
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) corrupt("truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void RecordSet::add_text(std::string name, std::string_view text) {
  records_.push_back({std::move(name), DType::kText, {text.size()}, std::string(text)});
}

void RecordSet::add_f64(std::string name, std::vector<std::uint64_t> shape,
                        const std::vector<double>& values) {
  if (element_count(shape) != values.size()) {
    fail(ErrorCode::kInvalidArgument, "record '" + name + "' shape does not match data");
  }
  std::string raw;
  raw.reserve(8 * values.size());
  for (double v : values) put_u64(raw, std::bit_cast<std::uint64_t>(v));
  records_.push_back({std::move(name), DType::kF64, std::move(shape), std::move(raw)});
}

void RecordSet::add_i64(std::string name, std::vector<std::uint64_t> shape,
                        const std::vector<std::int64_t>& values) {
  if (element_count(shape) != values.size()) {
    fail(ErrorCode::kInvalidArgument, "record '" + name + "' shape does not match data");
  }
  std::string raw;
  raw.reserve(8 * values.size());
  for (auto v : values) put_u64(raw, static_cast<std::uint64_t>(v));
  records_.push_back({std::move(name), DType::kI64, std::move(shape), std::move(raw)});
}

bool RecordSet::has(std::string_view name) const {
  for (const auto& r : records_) {
    if (r.name == name) return true;
  }
  return false;
}

const Record& RecordSet::get(std::string_view name) const {
  for (const auto& r : records_) {
    if (r.name == name) return r;
  }
  corrupt("missing record '" + std::string(name) + "'");
}

std::string RecordSet::text(std::string_view name) const {
  const Record& r = get(name);
  if (r.dtype != DType::kText) corrupt("record '" + r.name + "' is not text");
  return r.payload;
}

std::vector<double> RecordSet::f64(std::string_view name, std::size_t count) const {
  const Record& r = get(name);
  if (r.dtype != DType::kF64 || r.payload.size() != 8 * count) {
    corrupt("record '" + r.name + "' is not " + std::to_string(count) + " f64 values");
  }
  Reader in(r.payload);
  std::vector<double> out(count);
  for (auto& v : out) v = std::bit_cast<double>(in.u(8));
  return out;
}

std::vector<std::int64_t> RecordSet::i64(std::string_view name, std::size_t count) const {
  const Record& r = get(name);
  if (r.dtype != DType::kI64 || r.payload.size() != 8 * count) {
    corrupt("record '" + r.name + "' is not " + std::to_string(count) + " i64 values");
  }
  Reader in(r.payload);
  std::vector<std::int64_t> out(count);
  for (auto& v : out) v = static_cast<std::int64_t>(in.u(8));
  return out;
}

std::vector<std::int64_t> RecordSet::i64(std::string_view name) const {
  return i64(name, get(name).payload.size() / 8);
}

std::string RecordSet::encode() const {
  std::string out(kMagic);
  put_u64(out, kCheckpointVersion, 4);
  put_u64(out, records_.size(), 4);
  for (const auto& r : records_) {
    put_u64(out, r.name.size(), 4);
    out += r.name;
    out.push_back(static_cast<char>(r.dtype));
    put_u64(out, r.shape.size(), 4);
    for (auto d : r.shape) put_u64(out, d);
    put_u64(out, r.payload.size());
    out += r.payload;
  }
  put_u64(out, fnv1a(out));
  return out;
}

RecordSet RecordSet::decode(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 16 || bytes.substr(0, 4) != kMagic) {
    corrupt("bad magic header");
  }
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u(8) != fnv1a(body)) corrupt("checksum mismatch");

  Reader in(body);
  in.take(4);
  const auto version = in.u(4);
  if (version != kCheckpointVersion) {
    corrupt("unsupported version " + std::to_string(version));
  }
  const auto count = in.u(4);
  RecordSet set;
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    Record r;
    r.name = std::string(in.take(in.u(4)));
    const auto tag = in.u(1);
    if (tag > 2) corrupt("record '" + r.name + "' has unknown dtype " + std::to_string(tag));
    r.dtype = static_cast<DType>(tag);
    const auto rank = in.u(4);
    if (rank > 8) corrupt("record '" + r.name + "' has rank " + std::to_string(rank));
    for (std::uint64_t d = 0; d < rank; ++d) r.shape.push_back(in.u(8));
    r.payload = std::string(in.take(in.u(8)));
    const std::uint64_t width = r.dtype == DType::kText ? 1 : 8;
    if (r.payload.size() != width * element_count(r.shape)) {
      corrupt("record '" + r.name + "' payload does not match its shape");
    }
    if (!names.insert(r.name).second) corrupt("duplicate record '" + r.name + "'");
    set.records_.push_back(std::move(r));
  }
  if (in.pos() != body.size()) corrupt("trailing bytes after the last record");
  return set;
}

namespace {

using Shape = std::vector<std::uint64_t>;

std::vector<std::int64_t> to_i64(const std::vector<int>& v) {
  return {v.begin(), v.end()};
}

std::vector<int> to_int(const std::vector<std::int64_t>& v) {
  return {v.begin(), v.end()};
}

// Row-major payload.
void add_matrix(RecordSet& rs, const std::string& name, const Matrix& m) {
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) vals.push_back(m(r, c));
  }
  rs.add_f64(name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
             vals);
}

void read_matrix(const RecordSet& rs, const std::string& name, Matrix& m) {
  const Record& rec = rs.get(name);
  if (rec.shape != Shape{static_cast<std::uint64_t>(m.rows()),
                         static_cast<std::uint64_t>(m.cols())}) {
    corrupt("tensor '" + name + "' has the wrong shape");
  }
  const auto vals = rs.f64(name, static_cast<std::size_t>(m.size()));
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = vals[i++];
  }
}

void add_weights(RecordSet& rs, const std::string& prefix, const SupernetWeights& w) {
  w.for_each([&](const std::string& name, const Matrix& m) { add_matrix(rs, prefix + name, m); });
}

SupernetWeights read_weights(const RecordSet& rs, const std::string& prefix,
                             const SupernetConfig& net) {
  auto w = SupernetWeights::zeros(net);
  w.for_each([&](const std::string& name, Matrix& m) { read_matrix(rs, prefix + name, m); });
  return w;
}

void add_history(RecordSet& rs, const TrainHistory& h) {
  std::vector<std::int64_t> meta;
  std::vector<double> scalars, losses;
  std::string archs;
  for (const auto& s : h.steps) {
    meta.insert(meta.end(), {s.epoch, s.step, s.gate == Gate::kExplore ? 1 : 0,
                             static_cast<std::int64_t>(s.archs.size())});
    scalars.insert(scalars.end(), {s.exploit_probability, s.entropy});
    if (s.losses.size() != s.archs.size()) {
      fail(ErrorCode::kInvalidArgument, "history step has mismatched losses");
    }
    for (std::size_t j = 0; j < s.archs.size(); ++j) {
      archs += to_string(s.archs[j]) + "\n";
      losses.push_back(s.losses[j]);
    }
  }
  const auto n = static_cast<std::uint64_t>(h.steps.size());
  rs.add_i64("history.steps", {n, 4}, meta);
  rs.add_f64("history.scalars", {n, 2}, scalars);
  rs.add_text("history.archs", archs);
  rs.add_f64("history.losses", {losses.size()}, losses);
  std::vector<std::int64_t> ex;
  for (const auto& e : h.expansions) {
    ex.insert(ex.end(), {e.epoch, e.event.epoch, static_cast<int>(e.event.dimension),
                         e.event.option});
  }
  rs.add_i64("history.expansions", {h.expansions.size(), 4}, ex);
}

TrainHistory read_history(const RecordSet& rs) {
  TrainHistory h;
  const auto n = rs.get("history.steps").shape.at(0);
  const auto meta = rs.i64("history.steps", 4 * n);
  const auto scalars = rs.f64("history.scalars", 2 * n);
  const auto& lrec = rs.get("history.losses");
  const auto losses = rs.f64("history.losses", lrec.payload.size() / 8);
  std::istringstream archs(rs.text("history.archs"));
  std::size_t li = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    StepRecord s;
    s.epoch = static_cast<int>(meta[4 * i]);
    s.step = meta[4 * i + 1];
    s.gate = meta[4 * i + 2] ? Gate::kExplore : Gate::kExploit;
    s.exploit_probability = scalars[2 * i];
    s.entropy = scalars[2 * i + 1];
    for (std::int64_t j = 0; j < meta[4 * i + 3]; ++j) {
      std::string line;
      if (!std::getline(archs, line) || li >= losses.size()) corrupt("history is truncated");
      try {
        s.archs.push_back(parse_architecture(line));
      } catch (const Error&) {
        corrupt("history holds a malformed architecture '" + line + "'");
      }
      s.losses.push_back(losses[li++]);
    }
    h.steps.push_back(std::move(s));
  }
  if (li != losses.size()) corrupt("history has extra losses");
  const auto ex = rs.i64("history.expansions");
  if (ex.size() % 4) corrupt("history.expansions is ragged");
  for (std::size_t i = 0; i < ex.size(); i += 4) {
    if (ex[i + 2] < 0 || ex[i + 2] > 2) corrupt("bad expansion dimension");
    h.expansions.push_back({static_cast<int>(ex[i]),
                            {static_cast<int>(ex[i + 1]), static_cast<Dimension>(ex[i + 2]),
                             static_cast<int>(ex[i + 3])}});
  }
  return h;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  const bool adam_eq =
      adam.has_value() == o.adam.has_value() &&
      (!adam || (adam->step == o.adam->step && adam->m == o.adam->m && adam->v == o.adam->v));
  return settings == o.settings && net.vocab_size == o.net.vocab_size &&
         net.embed_dim == o.net.embed_dim && net.seq_len == o.net.seq_len &&
         net.num_classes == o.net.num_classes && net.space == o.net.space &&
         state == o.state && weights == o.weights && adam_eq;
}

std::string encode_checkpoint(const Checkpoint& c) {
  RecordSet rs;
  rs.add_text("settings", c.settings);
  rs.add_i64("net", {4}, {c.net.vocab_size, c.net.embed_dim, c.net.seq_len, c.net.num_classes});

  const SearchSpace& sp = c.state.space;
  rs.add_i64("space.max_depth", {1}, {sp.max_depth()});
  for (auto dim : {Dimension::kDepth, Dimension::kHeads, Dimension::kIntermediate}) {
    const auto& opts = sp.options(dim);
    rs.add_i64(std::string("space.") + dimension_name(dim), {opts.size()}, to_i64(opts));
  }
  const auto active = sp.active_counts();
  rs.add_i64("space.active", {3}, {static_cast<std::int64_t>(active[0]),
                                   static_cast<std::int64_t>(active[1]),
                                   static_cast<std::int64_t>(active[2])});
  std::vector<std::int64_t> sched;
  for (const auto& e : c.state.schedule) {
    sched.insert(sched.end(), {e.epoch, static_cast<int>(e.dimension), e.option});
  }
  rs.add_i64("schedule", {c.state.schedule.size(), 3}, sched);

  const auto& theta = c.state.theta;
  rs.add_i64("theta.variables", {1}, {static_cast<std::int64_t>(theta.num_variables())});
  for (std::size_t v = 0; v < theta.num_variables(); ++v) {
    const auto k = theta.probs(v).size();
    rs.add_f64("theta." + std::to_string(v) + ".p", {k}, theta.probs(v));
    std::vector<std::int64_t> sup;
    for (bool b : theta.support()[v]) sup.push_back(b);
    rs.add_i64("theta." + std::to_string(v) + ".support", {k}, sup);
  }

  const auto& ctl = c.state.controller;
  rs.add_f64("controller", {3}, {ctl.exploit_probability, ctl.entropy, ctl.max_entropy});
  rs.add_i64("controller.update_interval", {1}, {ctl.update_interval});
  rs.add_text("rng", c.state.rng.serialize());
  rs.add_i64("counters", {2}, {c.state.epoch, c.state.step});
  add_history(rs, c.state.history);

  if (c.weights) add_weights(rs, "weights.", *c.weights);
  if (c.adam) {
    add_weights(rs, "adam.m.", c.adam->m);
    add_weights(rs, "adam.v.", c.adam->v);
    rs.add_i64("adam.step", {1}, {c.adam->step});
  }
  return rs.encode();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const RecordSet rs = RecordSet::decode(bytes);
  try {
    Checkpoint c;
    c.settings = rs.text("settings");
    const auto net = rs.i64("net", 4);
    const int max_depth = static_cast<int>(rs.i64("space.max_depth", 1)[0]);
    SearchSpace full(max_depth, to_int(rs.i64("space.depth")), to_int(rs.i64("space.heads")),
                     to_int(rs.i64("space.intermediate")));
    c.net.vocab_size = static_cast<int>(net[0]);
    c.net.embed_dim = static_cast<int>(net[1]);
    c.net.seq_len = static_cast<int>(net[2]);
    c.net.num_classes = static_cast<int>(net[3]);
    c.net.space = full;
    validate(c.net);

    const auto active = rs.i64("space.active", 3);
    for (auto a : active) {
      if (a < 1) corrupt("active option count below 1");
    }
    c.state.space = full.with_active_counts({static_cast<std::size_t>(active[0]),
                                             static_cast<std::size_t>(active[1]),
                                             static_cast<std::size_t>(active[2])});
    const auto sched = rs.i64("schedule");
    if (sched.size() % 3) corrupt("schedule is ragged");
    for (std::size_t i = 0; i < sched.size(); i += 3) {
      if (sched[i + 1] < 0 || sched[i + 1] > 2) corrupt("bad schedule dimension");
      c.state.schedule.push_back({static_cast<int>(sched[i]),
                                  static_cast<Dimension>(sched[i + 1]),
                                  static_cast<int>(sched[i + 2])});
    }

    const auto nvars = static_cast<std::size_t>(rs.i64("theta.variables", 1)[0]);
    if (nvars != full.num_variables()) corrupt("theta does not match the space");
    CategoricalParams::Table probs;
    CategoricalParams::Support support;
    for (std::size_t v = 0; v < nvars; ++v) {
      const auto k = full.variable_option_count(v);
      probs.push_back(rs.f64("theta." + std::to_string(v) + ".p", k));
      std::vector<bool> sup;
      for (auto b : rs.i64("theta." + std::to_string(v) + ".support", k)) sup.push_back(b != 0);
      support.push_back(sup);
    }
    c.state.theta = CategoricalParams(probs, support);

    const auto ctl = rs.f64("controller", 3);
    c.state.controller.exploit_probability = ctl[0];
    c.state.controller.entropy = ctl[1];
    c.state.controller.max_entropy = ctl[2];
    c.state.controller.update_interval =
        static_cast<int>(rs.i64("controller.update_interval", 1)[0]);
    c.state.rng.deserialize(rs.text("rng"));
    const auto counters = rs.i64("counters", 2);
    c.state.epoch = static_cast<int>(counters[0]);
    c.state.step = counters[1];
    c.state.history = read_history(rs);

    if (rs.has("weights.embedding")) c.weights = read_weights(rs, "weights.", c.net);
    if (rs.has("adam.step")) {
      AdamState st;
      st.m = read_weights(rs, "adam.m.", c.net);
      st.v = read_weights(rs, "adam.v.", c.net);
      st.step = rs.i64("adam.step", 1)[0];
      c.adam = std::move(st);
    }
    return c;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptCheckpoint) throw;
    corrupt(e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorCode::kIo, "cannot read '" + path + "'");
  return buf.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) fail(ErrorCode::kIo, "short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::kIo, "cannot replace '" + path + "'");
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace eesng
