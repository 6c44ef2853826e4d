#include "eesng/rng.hpp"

#include <sstream>

#include "eesng/error.hpp"

namespace eesng {

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (in.fail()) fail(ErrorCode::kCorruptCheckpoint, "malformed RNG state");
}

}  // namespace eesng
