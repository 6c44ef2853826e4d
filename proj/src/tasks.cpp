#include "eesng/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "eesng/error.hpp"

namespace eesng {

const char* task_name(TaskKind kind) {
  return kind == TaskKind::kMajority ? "majority" : "duplicate";
}

TaskKind parse_task(std::string_view name) {
  if (name == "majority" || name == "t1") return TaskKind::kMajority;
  if (name == "duplicate" || name == "t2") return TaskKind::kDuplicate;
  fail(ErrorCode::kConfig, "unknown task '" + std::string(name) + "'");
}

void validate(const TaskSpec& task) {
  if (task.seq_len < 2 || task.vocab_size < 2) {
    fail(ErrorCode::kConfig, "task needs seq_len >= 2 and vocab_size >= 2");
  }
  if (task.kind == TaskKind::kDuplicate && task.vocab_size < task.seq_len) {
    fail(ErrorCode::kConfig, "duplicate task needs vocab_size >= seq_len");
  }
}

Batch make_batch(const TaskSpec& task, int size, Rng& rng) {
  validate(task);
  const auto len = static_cast<std::size_t>(task.seq_len);
  const auto vocab = static_cast<std::size_t>(task.vocab_size);
  Batch batch(static_cast<std::size_t>(size));
  for (auto& ex : batch) {
    ex.tokens.resize(len);
    if (task.kind == TaskKind::kMajority) {
      while (true) {
        int zeros = 0, ones = 0;
        for (auto& t : ex.tokens) {
          t = static_cast<int>(rng.below(vocab));
          zeros += t == 0;
          ones += t == 1;
        }
        if (zeros != ones) {
          ex.label = zeros > ones ? 1 : 0;
          break;
        }
      }
    } else {
      // Partial Fisher-Yates for distinct tokens.
      std::vector<int> pool(vocab);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < len; ++i) {
        std::swap(pool[i], pool[i + rng.below(vocab - i)]);
        ex.tokens[i] = pool[i];
      }
      ex.label = rng.bernoulli(0.5) ? 1 : 0;
      if (ex.label == 1) {
        const std::size_t dst = rng.below(len);
        std::size_t src = rng.below(len - 1);
        if (src >= dst) ++src;
        ex.tokens[dst] = ex.tokens[src];
      }
    }
  }
  return batch;
}

Batch parse_dataset(std::string_view text) {
  Batch batch;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto bad = [&] {
      fail(ErrorCode::kConfig,
           "dataset line " + std::to_string(line_no) +
               ": expected 'id id ...<TAB>label'");
    };
    if (tab == std::string_view::npos) bad();
    Example ex;
    std::string_view ids = line.substr(0, tab);
    std::size_t p = 0;
    while (p < ids.size()) {
      while (p < ids.size() && ids[p] == ' ') ++p;
      if (p >= ids.size()) break;
      int v = 0;
      const auto [ptr, ec] = std::from_chars(ids.data() + p, ids.data() + ids.size(), v);
      if (ec != std::errc() || v < 0) bad();
      ex.tokens.push_back(v);
      p = static_cast<std::size_t>(ptr - ids.data());
      if (p < ids.size() && ids[p] != ' ') bad();
    }
    const auto label = line.substr(tab + 1);
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), ex.label);
    if (ec != std::errc() || ptr != label.data() + label.size() || ex.tokens.empty()) bad();
    batch.push_back(std::move(ex));
  }
  return batch;
}

Batch load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open dataset '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

}  // namespace eesng
