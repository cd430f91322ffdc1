#include "asrimpact/annotation/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "asrimpact/core/digest.hpp"
#include "asrimpact/core/random.hpp"

namespace asrimpact::annotation {

namespace fs = std::filesystem;

namespace {

constexpr const char* kLogName = "events.log";
constexpr const char* kSnapshotName = "snapshot.json";

[[noreturn]] void storage_error(const std::string& what, const fs::path& path) {
  throw ServiceError(ErrorKind::storage, what + " '" + path.string() + "': " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const fs::path& path) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      storage_error("cannot write", path);
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

void sync_directory(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) storage_error("cannot open directory", dir);
  ::fsync(fd);
  ::close(fd);
}

// Writes `data` to `path` via a synced temporary file and rename.
void replace_file(const fs::path& path, const std::string& data) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) storage_error("cannot create", tmp);
  write_all(fd, data, tmp);
  if (::fsync(fd) != 0) storage_error("cannot sync", tmp);
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) storage_error("cannot rename onto", path);
  sync_directory(path.parent_path());
}

bool needs_justification(int label) { return label == 1 || label == 2; }

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::uint64_t annotator_stream(const std::string& id) {
  return std::stoull(sha256_hex(id).substr(0, 16), nullptr, 16);
}

}  // namespace

AnnotationStore::AnnotationStore(fs::path data_dir, std::vector<LabeledExample> examples,
                                 std::vector<std::string> annotators, const StoreOptions& options)
    : dir_(std::move(data_dir)), annotators_(std::move(annotators)), options_(options) {
  if (!options_.clock) options_.clock = &system_clock();
  for (auto& e : examples) {
    const std::string id = e.id;
    e.label.reset();
    e.justification.reset();
    if (!examples_.emplace(id, std::move(e)).second) {
      throw ServiceError(ErrorKind::invalid, "duplicate example id '" + id + "'");
    }
  }
  std::sort(annotators_.begin(), annotators_.end());
  if (std::adjacent_find(annotators_.begin(), annotators_.end()) != annotators_.end()) {
    throw ServiceError(ErrorKind::invalid, "duplicate annotator id");
  }
  std::vector<std::string> ids;
  for (const auto& [id, e] : examples_) ids.push_back(id);
  for (const auto& a : annotators_) {
    auto order = ids;
    SplitMix64 rng(substream_seed(options_.seed, annotator_stream(a)));
    shuffle(order, rng);
    orders_.emplace(a, std::move(order));
  }
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw ServiceError(ErrorKind::storage, "cannot create data directory '" + dir_.string() + "': " + ec.message());
  replay();
}

bool AnnotationStore::has_annotator(const std::string& id) const {
  return std::binary_search(annotators_.begin(), annotators_.end(), id);
}

std::int64_t AnnotationStore::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(options_.clock->now().time_since_epoch()).count();
}

const LabeledExample& AnnotationStore::example(const std::string& id) const {
  auto it = examples_.find(id);
  if (it == examples_.end()) throw ServiceError(ErrorKind::not_found, "unknown example '" + id + "'");
  return it->second;
}

void AnnotationStore::apply(const Json& event) {
  const auto type = event.at("type").get<std::string>();
  if (type == "label") {
    auto r = event.at("record").get<AnnotationRecord>();
    example(r.example_id);
    auto& slot = live_[r.example_id];
    auto it = slot.find(r.annotator_id);
    if (it != slot.end()) archived_.push_back(it->second);
    slot[r.annotator_id] = std::move(r);
  } else if (type == "resolve") {
    auto r = event.at("record").get<AdjudicationRecord>();
    example(r.example_id);
    adjudication_history_.push_back(r);
    adjudications_[r.example_id] = std::move(r);
  } else {
    throw SchemaError("unknown event type '" + type + "'");
  }
}

void AnnotationStore::replay() {
  const fs::path snapshot = dir_ / kSnapshotName;
  std::uint64_t snapshot_seq = 0;
  if (fs::exists(snapshot)) {
    try {
      const Json doc = read_json_file(snapshot);
      snapshot_seq = doc.at("sequence").get<std::uint64_t>();
      for (const auto& r : doc.at("live")) {
        auto rec = r.get<AnnotationRecord>();
        example(rec.example_id);
        live_[rec.example_id][rec.annotator_id] = rec;
      }
      archived_ = doc.at("archived").get<std::vector<AnnotationRecord>>();
      adjudication_history_ = doc.at("adjudication_history").get<std::vector<AdjudicationRecord>>();
      for (const auto& r : doc.at("adjudications")) {
        auto rec = r.get<AdjudicationRecord>();
        adjudications_[rec.example_id] = rec;
      }
    } catch (const ServiceError&) {
      throw;
    } catch (const std::exception& e) {
      throw ServiceError(ErrorKind::storage, "corrupt snapshot '" + snapshot.string() + "': " + e.what());
    }
  }
  sequence_ = snapshot_seq;

  const fs::path log = dir_ / kLogName;
  if (!fs::exists(log)) return;
  std::ifstream in(log, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < data.size()) {
    const auto end = data.find('\n', pos);
    ++line_no;
    if (end == std::string::npos) {
      // An append that never reached its newline was never acknowledged.
      fs::resize_file(log, pos);
      break;
    }
    const std::string line = data.substr(pos, end - pos);
    pos = end + 1;
    try {
      const Json event = Json::parse(line);
      const auto seq = event.at("sequence").get<std::uint64_t>();
      if (seq <= snapshot_seq) continue;
      apply(event);
      sequence_ = seq;
      ++since_snapshot_;
    } catch (const ServiceError&) {
      throw;
    } catch (const std::exception& e) {
      throw ServiceError(ErrorKind::storage,
                         log.string() + ":" + std::to_string(line_no) + ": corrupt event: " + e.what());
    }
  }
}

void AnnotationStore::append(const Json& event) {
  const fs::path log = dir_ / kLogName;
  const bool fresh = !fs::exists(log);
  const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) storage_error("cannot open", log);
  write_all(fd, event.dump() + "\n", log);
  if (::fsync(fd) != 0) {
    ::close(fd);
    storage_error("cannot sync", log);
  }
  ::close(fd);
  if (fresh) sync_directory(dir_);
}

std::optional<Task> AnnotationStore::next_task(const std::string& annotator_id) const {
  if (!has_annotator(annotator_id)) {
    throw ServiceError(ErrorKind::unknown_annotator, "unknown annotator '" + annotator_id + "'");
  }
  std::shared_lock lock(mutex_);
  const auto& order = orders_.at(annotator_id);
  std::optional<Task> out;
  std::size_t done = 0;
  for (const auto& id : order) {
    auto it = live_.find(id);
    const bool labelled = it != live_.end() && it->second.count(annotator_id) > 0;
    if (labelled) {
      ++done;
    } else if (!out) {
      out = Task{examples_.at(id), 0, order.size()};
    }
  }
  if (out) out->done = done;
  return out;
}

AnnotationRecord AnnotationStore::submit_label(AnnotationRecord record) {
  if (!has_annotator(record.annotator_id)) {
    throw ServiceError(ErrorKind::unknown_annotator, "unknown annotator '" + record.annotator_id + "'");
  }
  example(record.example_id);
  if (!is_valid_label(record.label)) {
    throw ServiceError(ErrorKind::invalid, "label " + std::to_string(record.label) + " is outside {0,1,2}");
  }
  if (needs_justification(record.label) && blank(record.justification)) {
    throw ServiceError(ErrorKind::invalid, "label " + std::to_string(record.label) + " requires a justification");
  }
  std::unique_lock lock(mutex_);
  record.created_at = now_ms();
  const Json event{{"sequence", sequence_ + 1}, {"type", "label"}, {"record", record}};
  append(event);
  apply(event);
  ++sequence_;
  if (options_.compact_every > 0 && ++since_snapshot_ >= options_.compact_every) compact_locked();
  return record;
}

std::vector<PairAgreement> AnnotationStore::agreement() const {
  std::shared_lock lock(mutex_);
  std::vector<PairAgreement> out;
  for (std::size_t i = 0; i < annotators_.size(); ++i) {
    for (std::size_t j = i + 1; j < annotators_.size(); ++j) {
      PairAgreement p;
      p.annotator_a = annotators_[i];
      p.annotator_b = annotators_[j];
      stats::LabelSeries a;
      stats::LabelSeries b;
      for (const auto& [id, records] : live_) {
        auto ra = records.find(p.annotator_a);
        auto rb = records.find(p.annotator_b);
        if (ra == records.end() || rb == records.end()) continue;
        p.example_ids.push_back(id);
        a.ids.push_back(id);
        a.labels.push_back(ra->second.label);
        b.ids.push_back(id);
        b.labels.push_back(rb->second.label);
      }
      if (p.example_ids.empty()) continue;
      p.report = stats::agreement_report(a, b, options_.bootstrap);
      out.push_back(std::move(p));
    }
  }
  if (out.empty()) {
    throw ServiceError(ErrorKind::insufficient_overlap, "no two annotators have labelled a common example");
  }
  return out;
}

std::vector<AdjudicationBundle> AnnotationStore::adjudication_queue() const {
  std::shared_lock lock(mutex_);
  std::vector<AdjudicationBundle> out;
  for (const auto& [id, records] : live_) {
    if (records.size() < 2 || adjudications_.count(id)) continue;
    int lo = kNumLabels;
    int hi = -1;
    for (const auto& [annotator, r] : records) {
      lo = std::min(lo, r.label);
      hi = std::max(hi, r.label);
    }
    if (hi == lo) continue;
    AdjudicationBundle b;
    b.example = examples_.at(id);
    for (const auto& [annotator, r] : records) b.records.push_back(r);
    b.max_distance = hi - lo;
    out.push_back(std::move(b));
  }
  std::stable_sort(out.begin(), out.end(), [](const AdjudicationBundle& x, const AdjudicationBundle& y) {
    if (x.max_distance != y.max_distance) return x.max_distance > y.max_distance;
    return x.example.id < y.example.id;
  });
  return out;
}

AdjudicationRecord AnnotationStore::resolve(AdjudicationRecord record, bool require_unresolved) {
  example(record.example_id);
  if (!is_valid_label(record.final_label)) {
    throw ServiceError(ErrorKind::invalid, "final label " + std::to_string(record.final_label) + " is outside {0,1,2}");
  }
  if (record.resolver_ids.empty()) throw ServiceError(ErrorKind::invalid, "resolution needs at least one resolver");
  for (const auto& r : record.resolver_ids) {
    if (!has_annotator(r)) throw ServiceError(ErrorKind::unknown_annotator, "unknown resolver '" + r + "'");
  }
  std::unique_lock lock(mutex_);
  auto it = live_.find(record.example_id);
  if (it == live_.end() || it->second.empty()) {
    throw ServiceError(ErrorKind::invalid, "example '" + record.example_id + "' has no labels to adjudicate");
  }
  if (require_unresolved && adjudications_.count(record.example_id)) {
    throw ServiceError(ErrorKind::conflict, "example '" + record.example_id + "' is already resolved");
  }
  record.created_at = now_ms();
  const Json event{{"sequence", sequence_ + 1}, {"type", "resolve"}, {"record", record}};
  append(event);
  apply(event);
  ++sequence_;
  if (options_.compact_every > 0 && ++since_snapshot_ >= options_.compact_every) compact_locked();
  return record;
}

std::vector<LabeledExample> AnnotationStore::export_gold() const {
  std::shared_lock lock(mutex_);
  std::vector<LabeledExample> out;
  for (const auto& [id, ex] : examples_) {
    LabeledExample e = ex;
    auto adj = adjudications_.find(id);
    if (adj != adjudications_.end()) {
      e.label = adj->second.final_label;
      if (!adj->second.note.empty()) e.justification = adj->second.note;
    } else {
      auto it = live_.find(id);
      if (it == live_.end() || it->second.size() < 2) continue;
      std::set<int> labels;
      for (const auto& [annotator, r] : it->second) labels.insert(r.label);
      if (labels.size() != 1) continue;
      e.label = *labels.begin();
      for (const auto& [annotator, r] : it->second) {
        if (!blank(r.justification)) {
          e.justification = r.justification;
          break;
        }
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<AnnotationRecord> AnnotationStore::live_records() const {
  std::shared_lock lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (const auto& [id, records] : live_) {
    for (const auto& [annotator, r] : records) out.push_back(r);
  }
  return out;
}

std::vector<AnnotationRecord> AnnotationStore::archived_records() const {
  std::shared_lock lock(mutex_);
  return archived_;
}

std::vector<AdjudicationRecord> AnnotationStore::adjudication_history() const {
  std::shared_lock lock(mutex_);
  return adjudication_history_;
}

void AnnotationStore::compact() {
  std::unique_lock lock(mutex_);
  compact_locked();
}

void AnnotationStore::compact_locked() {
  Json live = Json::array();
  for (const auto& [id, records] : live_) {
    for (const auto& [annotator, r] : records) live.push_back(r);
  }
  Json adjudications = Json::array();
  for (const auto& [id, r] : adjudications_) adjudications.push_back(r);
  const Json doc{{"sequence", sequence_},
                 {"live", live},
                 {"archived", archived_},
                 {"adjudications", adjudications},
                 {"adjudication_history", adjudication_history_}};
  replace_file(dir_ / kSnapshotName, doc.dump(2) + "\n");
  // Events up to `sequence_` are skipped on replay, so a crash before the
  // truncation below loses nothing.
  const fs::path log = dir_ / kLogName;
  if (fs::exists(log)) {
    const int fd = ::open(log.c_str(), O_WRONLY | O_TRUNC);
    if (fd < 0) storage_error("cannot truncate", log);
    ::fsync(fd);
    ::close(fd);
  }
  since_snapshot_ = 0;
}

Json to_json_value(const stats::AgreementReport& report) {
  return Json{{"n", report.n},
              {"percent_agreement", report.percent_agreement},
              {"kappa", report.kappa},
              {"kappa_degenerate", report.kappa_degenerate},
              {"kappa_ci", {report.kappa_ci.low, report.kappa_ci.high}},
              {"confusion", report.per_class_confusion}};
}

Json to_json_value(const PairAgreement& pair) {
  Json j = to_json_value(pair.report);
  j["annotator_a"] = pair.annotator_a;
  j["annotator_b"] = pair.annotator_b;
  j["example_ids"] = pair.example_ids;
  return j;
}

Json to_json_value(const AdjudicationBundle& bundle) {
  return Json{{"example", bundle.example}, {"records", bundle.records}, {"max_distance", bundle.max_distance}};
}

Json to_json_value(const Task& task) {
  return Json{{"example", task.example}, {"done", task.done}, {"total", task.total}};
}

}  // namespace asrimpact::annotation
