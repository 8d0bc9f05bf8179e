#pragma once

#include <cstddef>
#include <mutex>
#include <string>
#include <vector>

namespace pte {

/// Process-wide record of dataset reads, used to audit that retain-free
/// methods never touch retain splits. Consecutive reads of the same tag are
/// collapsed into one event with a count.
class AccessLog {
 public:
  struct Event {
    enum class Kind { kMarker, kRead } kind;
    std::string label;  // marker text or dataset tag
    std::size_t count = 1;
  };

  static AccessLog& instance();

  void record_read(const std::string& tag);
  void mark(const std::string& marker);
  void clear();

  std::vector<Event> events() const;

  /// Reads whose tag is not in `allowed`, occurring between each `begin`
  /// marker and the following `end` marker. Returns one entry per offending
  /// event. Events before index `from` are ignored.
  std::vector<Event> reads_between(const std::string& begin, const std::string& end,
                                   const std::vector<std::string>& allowed,
                                   std::size_t from = 0) const;

  std::size_t size() const;

  /// Number of begin markers seen (for asserting the audit had something to look at).
  std::size_t marker_count(const std::string& marker) const;

 private:
  AccessLog() = default;
  mutable std::mutex mu_;
  std::vector<Event> events_;
};

inline constexpr const char* kUnlearnStart = "unlearn start";
inline constexpr const char* kUnlearnEnd = "unlearn end";

}  // namespace pte
