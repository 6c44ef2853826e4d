#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "eesng/rng.hpp"

namespace eesng {

struct Example {
  std::vector<int> tokens;
  int label = 0;
};

using Batch = std::vector<Example>;

// Synthetic binary classification tasks over fixed-length token sequences.
//  - majority (t1): label 1 iff token 0 occurs more often than token 1; ties
//    are redrawn.
//  - duplicate (t2): label 1 iff some token occurs twice. Needs
//    vocab_size >= seq_len.
enum class TaskKind { kMajority, kDuplicate };

const char* task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::kMajority;
  int vocab_size = 8;
  int seq_len = 16;
};

void validate(const TaskSpec& task);

Batch make_batch(const TaskSpec& task, int size, Rng& rng);

// One example per line: space-separated token ids, a tab, the label.
Batch load_dataset(const std::string& path);
Batch parse_dataset(std::string_view text);

}  // namespace eesng
