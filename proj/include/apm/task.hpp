#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "apm/errors.hpp"

namespace apm {

// Weather scenarios. Numeric values are part of the checkpoint wire format.
enum class Task : std::uint8_t { Rain = 0, Raindrop = 1, Snow = 2 };

inline constexpr std::array<Task, 3> kAllTasks = {Task::Rain, Task::Raindrop,
                                                  Task::Snow};

inline constexpr int task_index(Task t) { return static_cast<int>(t); }

inline const char* to_string(Task t) {
  switch (t) {
    case Task::Rain: return "rain";
    case Task::Raindrop: return "raindrop";
    case Task::Snow: return "snow";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  if (s == "rain") return Task::Rain;
  if (s == "raindrop") return Task::Raindrop;
  if (s == "snow") return Task::Snow;
  throw ConfigError("unknown task '" + s + "' (expected rain|raindrop|snow)");
}

inline Task task_from_id(std::uint8_t id) {
  if (id > 2) throw Error("unknown task id " + std::to_string(id));
  return static_cast<Task>(id);
}

}  // namespace apm
