#pragma once

// Label capture, agreement and adjudication over a fixed example set. State
// lives in an append-only event log under a data directory; every write is
// flushed to disk before the call returns.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrimpact/core/clock.hpp"
#include "asrimpact/core/model.hpp"
#include "asrimpact/core/serialize.hpp"
#include "asrimpact/stats/stats.hpp"

namespace asrimpact::annotation {

enum class ErrorKind { invalid, not_found, unknown_annotator, insufficient_overlap, conflict, storage };

class ServiceError : public std::runtime_error {
 public:
  ServiceError(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct StoreOptions {
  // Seeds every annotator's task order.
  std::uint64_t seed = 0;
  // Events appended since the last snapshot before compacting; 0 disables.
  int compact_every = 1000;
  const Clock* clock = nullptr;
  stats::BootstrapOptions bootstrap;
};

// An example as shown to an annotator: no label, no peer information.
struct Task {
  LabeledExample example;
  std::size_t done = 0;
  std::size_t total = 0;
};

struct PairAgreement {
  std::string annotator_a;
  std::string annotator_b;
  std::vector<std::string> example_ids;
  stats::AgreementReport report;
};

struct AdjudicationBundle {
  LabeledExample example;
  // Live records, ordered by annotator id.
  std::vector<AnnotationRecord> records;
  int max_distance = 0;
};

class AnnotationStore {
 public:
  // Replays the snapshot and event log in `data_dir`, creating it if needed.
  // Throws ServiceError(storage) on a corrupt log; a torn final line left by
  // an interrupted append is dropped.
  AnnotationStore(std::filesystem::path data_dir, std::vector<LabeledExample> examples,
                  std::vector<std::string> annotators, const StoreOptions& options = {});

  const std::vector<std::string>& annotators() const { return annotators_; }
  bool has_annotator(const std::string& id) const;

  // Next example this annotator has not labelled, in a stable per-annotator
  // order; repeated calls return the same task until a label is submitted.
  std::optional<Task> next_task(const std::string& annotator_id) const;

  // Persists the record, replacing the annotator's live label for the example.
  // created_at is set from the store clock. Returns the stored record.
  AnnotationRecord submit_label(AnnotationRecord record);

  // Agreement for every annotator pair that shares examples, computed on the
  // doubly-annotated subset ordered by example id.
  std::vector<PairAgreement> agreement() const;

  // Unresolved examples with differing live labels, largest label distance
  // first, then by example id.
  std::vector<AdjudicationBundle> adjudication_queue() const;

  // Sets the gold label. A second resolution replaces the first and both stay
  // in the audit trail. With `require_unresolved`, an already resolved
  // example is a conflict.
  AdjudicationRecord resolve(AdjudicationRecord record, bool require_unresolved = false);

  // Adjudicated examples plus unanimous ones (at least two annotators, all
  // agreeing), ordered by id, each with its final label.
  std::vector<LabeledExample> export_gold() const;

  std::vector<AnnotationRecord> live_records() const;
  std::vector<AnnotationRecord> archived_records() const;
  std::vector<AdjudicationRecord> adjudication_history() const;

  // Writes a snapshot and truncates the event log.
  void compact();

 private:
  void replay();
  void apply(const Json& event);
  void append(const Json& event);
  void compact_locked();
  std::int64_t now_ms() const;
  const LabeledExample& example(const std::string& id) const;

  std::filesystem::path dir_;
  std::map<std::string, LabeledExample> examples_;
  std::vector<std::string> annotators_;
  std::map<std::string, std::vector<std::string>> orders_;
  StoreOptions options_;

  mutable std::shared_mutex mutex_;
  std::uint64_t sequence_ = 0;
  int since_snapshot_ = 0;
  // example id -> annotator id -> record
  std::map<std::string, std::map<std::string, AnnotationRecord>> live_;
  std::vector<AnnotationRecord> archived_;
  std::map<std::string, AdjudicationRecord> adjudications_;
  std::vector<AdjudicationRecord> adjudication_history_;
};

Json to_json_value(const stats::AgreementReport& report);
Json to_json_value(const PairAgreement& pair);
Json to_json_value(const AdjudicationBundle& bundle);
Json to_json_value(const Task& task);

}  // namespace asrimpact::annotation
