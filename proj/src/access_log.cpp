#include "pte/access_log.hpp"

#include <algorithm>

namespace pte {

AccessLog& AccessLog::instance() {
  static AccessLog log;
  return log;
}

void AccessLog::record_read(const std::string& tag) {
  std::lock_guard lock(mu_);
  if (!events_.empty() && events_.back().kind == Event::Kind::kRead &&
      events_.back().label == tag) {
    ++events_.back().count;
    return;
  }
  events_.push_back({Event::Kind::kRead, tag, 1});
}

void AccessLog::mark(const std::string& marker) {
  std::lock_guard lock(mu_);
  events_.push_back({Event::Kind::kMarker, marker, 1});
}

void AccessLog::clear() {
  std::lock_guard lock(mu_);
  events_.clear();
}

std::vector<AccessLog::Event> AccessLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<AccessLog::Event> AccessLog::reads_between(
    const std::string& begin, const std::string& end,
    const std::vector<std::string>& allowed, std::size_t from) const {
  std::lock_guard lock(mu_);
  std::vector<Event> offending;
  bool inside = false;
  for (std::size_t i = from; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (e.kind == Event::Kind::kMarker) {
      if (e.label == begin) inside = true;
      else if (e.label == end) inside = false;
      continue;
    }
    if (inside && std::find(allowed.begin(), allowed.end(), e.label) == allowed.end())
      offending.push_back(e);
  }
  return offending;
}

std::size_t AccessLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::size_t AccessLog::marker_count(const std::string& marker) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(events_.begin(), events_.end(), [&](const Event& e) {
    return e.kind == Event::Kind::kMarker && e.label == marker;
  }));
}

}  // namespace pte
