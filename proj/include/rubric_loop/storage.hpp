#pragma once

// Dataset loading and splitting, and the on-disk experiment store.
//
// Layout under $RUBRIC_LOOP_HOME:
//
//   experiment/<id>/config           experiment configuration (JSON)
//   experiment/<id>/dataset.ref      dataset path and its SHA-256
//   experiment/<id>/<dir>/<sha>.json content-addressed records
//   experiment/<id>/MANIFEST         append-only "<seq> <kind> <sha> <label>"
//   experiment/<id>/LOCK             advisory writer lock
//
// Records are immutable; a record's file name is the SHA-256 of its bytes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric_loop/core_model.hpp"

namespace rubric_loop {

struct Dataset {
  Rubric rubric;
  std::vector<StudentResponse> responses;  // sorted by id
  std::vector<ScoreVector> gold;           // aligned with responses

  const StudentResponse* response(std::string_view id) const;
  const ScoreVector* gold_for(std::string_view id) const;
  std::vector<std::string> ids() const;
  std::vector<StudentResponse> responses_for(const std::vector<std::string>& ids) const;
  std::vector<ScoreVector> gold_for_all(const std::vector<std::string>& ids) const;

  bool operator==(const Dataset&) const = default;
};

Rubric load_rubric(const std::filesystem::path& path);

/// One JSON object per line: {"id", "question_id", "text", "gold": {sub: 0|1},
/// optional "total"}. Blank lines are skipped. Every bad line is reported,
/// prefixed with its line number.
Dataset parse_dataset(std::string_view jsonl, const Rubric& rubric);
Dataset load_dataset(const std::filesystem::path& path, const Rubric& rubric);
std::string dataset_to_jsonl(const Dataset& dataset);

/// A rater file: {"rater_id": ..., "scores": [{"response_id", "by_subscore",
/// optional "total"}]}. A missing total is computed.
RaterScores parse_rater_scores(const nlohmann::json& j, const Rubric& rubric);
RaterScores load_rater_scores(const std::filesystem::path& path, const Rubric& rubric);

struct Split {
  double ratio = 0.8;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;  // sorted
  std::vector<std::string> test_ids;   // sorted

  bool operator==(const Split&) const = default;
};

/// Seeded shuffle of the sorted ids; the last round((1 - ratio) * n) go to
/// test. Needs at least 5 responses.
Split split_ids(std::vector<std::string> ids, double ratio, std::uint64_t seed);
Split split_dataset(const Dataset& dataset, double ratio = 0.8, std::uint64_t seed = 0);

std::string read_file(const std::filesystem::path& path);
// Temp file in the same directory, fsync, rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

struct ManifestEntry {
  int seq = 0;
  std::string kind;
  std::string digest;
  std::string label;

  bool operator==(const ManifestEntry&) const = default;
};

// Record kinds and the directory each is stored in.
namespace record_kind {
inline constexpr const char* kConfig = "config";
inline constexpr const char* kSplit = "split";
inline constexpr const char* kIrrSample = "irr_sample";
inline constexpr const char* kIrrRound = "irr_round";
inline constexpr const char* kConsensus = "consensus";
inline constexpr const char* kExemplars = "exemplars";
inline constexpr const char* kPromptSpec = "prompt_spec";
inline constexpr const char* kBalance = "balance";
inline constexpr const char* kRun = "run";
inline constexpr const char* kEvaluation = "evaluation";
inline constexpr const char* kAlState = "al_state";
inline constexpr const char* kAlIteration = "al_iteration";
inline constexpr const char* kAlTags = "al_tags";
inline constexpr const char* kAlCandidates = "al_candidates";
inline constexpr const char* kAlEvent = "al_event";
}  // namespace record_kind

std::string record_directory(std::string_view kind);

/// Read access to one experiment. Cheap to construct; reads the disk on
/// every call.
class ExperimentStore {
 public:
  ExperimentStore(std::filesystem::path home, std::string experiment_id);

  const std::string& id() const { return id_; }
  std::filesystem::path dir() const;
  bool exists() const;

  std::vector<ManifestEntry> manifest() const;
  // SHA-256 of the MANIFEST bytes; changes on every commit.
  std::string head() const;

  /// Loads a record and checks its bytes against the digest. Throws
  /// CorruptionError on mismatch, NotFoundError if absent.
  nlohmann::json load(std::string_view kind, std::string_view digest) const;
  std::optional<ManifestEntry> latest(std::string_view kind, std::string_view label = {}) const;
  std::vector<ManifestEntry> all(std::string_view kind) const;

  nlohmann::json config() const;
  nlohmann::json dataset_ref() const;

  static std::vector<std::string> list(const std::filesystem::path& home);

 private:
  std::filesystem::path home_;
  std::string id_;
};

/// Exclusive writer for one experiment, held for its lifetime via flock on
/// LOCK. A second writer gets ConflictError("lock_conflict").
class ExperimentWriter {
 public:
  explicit ExperimentWriter(const ExperimentStore& store);
  ~ExperimentWriter();
  ExperimentWriter(const ExperimentWriter&) = delete;
  ExperimentWriter& operator=(const ExperimentWriter&) = delete;

  /// Creates the directory skeleton, config and dataset.ref. Fails if the
  /// experiment already has a manifest.
  static void create(const ExperimentStore& store, const nlohmann::json& config,
                     const nlohmann::json& dataset_ref);

  // Queues a record; returns its digest. Nothing is visible until commit.
  std::string stage(std::string_view kind, const nlohmann::json& record, std::string label = {});

  /// Writes staged records, then appends their manifest lines in one write.
  /// With `expected_head`, throws ConflictError("stale_head") if the manifest
  /// changed since the caller read it.
  void commit(const std::optional<std::string>& expected_head = std::nullopt);

 private:
  struct Staged {
    std::string kind;
    std::string digest;
    std::string bytes;
    std::string label;
  };

  const ExperimentStore& store_;
  int lock_fd_ = -1;
  std::vector<Staged> staged_;
};

void to_json(nlohmann::json& j, const Split& s);
void from_json(const nlohmann::json& j, Split& s);
void to_json(nlohmann::json& j, const Dataset& d);
void from_json(const nlohmann::json& j, Dataset& d);
void to_json(nlohmann::json& j, const ManifestEntry& e);

}  // namespace rubric_loop
