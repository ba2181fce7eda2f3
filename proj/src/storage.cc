#include "rubric_loop/storage.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rubric_loop/digest.hpp"
#include "rubric_loop/errors.hpp"
#include "rubric_loop/prng.hpp"

namespace fs = std::filesystem;

namespace rubric_loop {

namespace {

std::string errno_text() { return std::strerror(errno); }

void write_all(int fd, std::string_view bytes, const fs::path& path) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("io_error", fmt::format("write {}: {}", path.string(), errno_text()),
                  ExitCode::kInternal);
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    if (!(fields >> e.seq >> e.kind >> e.digest)) {
      throw CorruptionError(fmt::format("MANIFEST line {} is malformed", lineno));
    }
    fields >> e.label;
    if (e.label == "-") e.label.clear();
    out.push_back(std::move(e));
  }
  return out;
}

ScoreVector score_from_json(const nlohmann::json& j, const std::string& id_key) {
  ScoreVector v;
  j.at(id_key).get_to(v.response_id);
  j.at(id_key == "id" ? "gold" : "by_subscore").get_to(v.by_subscore);
  v.total = j.contains("total") ? j.at("total").get<int>() : total_of(v);
  return v;
}

}  // namespace

const StudentResponse* Dataset::response(std::string_view id) const {
  auto it = std::lower_bound(responses.begin(), responses.end(), id,
                             [](const StudentResponse& r, std::string_view key) { return r.id < key; });
  return it != responses.end() && it->id == id ? &*it : nullptr;
}

const ScoreVector* Dataset::gold_for(std::string_view id) const {
  const StudentResponse* r = response(id);
  return r == nullptr ? nullptr : &gold[static_cast<std::size_t>(r - responses.data())];
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(responses.size());
  for (const auto& r : responses) out.push_back(r.id);
  return out;
}

std::vector<StudentResponse> Dataset::responses_for(const std::vector<std::string>& ids) const {
  std::vector<StudentResponse> out;
  for (const auto& id : ids) {
    const StudentResponse* r = response(id);
    if (r == nullptr) throw NotFoundError("unknown response id " + id);
    out.push_back(*r);
  }
  return out;
}

std::vector<ScoreVector> Dataset::gold_for_all(const std::vector<std::string>& ids) const {
  std::vector<ScoreVector> out;
  for (const auto& id : ids) {
    const ScoreVector* g = gold_for(id);
    if (g == nullptr) throw NotFoundError("unknown response id " + id);
    out.push_back(*g);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.parent_path() / fmt::format(".tmp-{}-{}", ::getpid(), path.filename().string());
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) {
    throw Error("io_error", fmt::format("open {}: {}", tmp.string(), errno_text()), ExitCode::kInternal);
  }
  try {
    write_all(fd, bytes, tmp);
  } catch (...) {
    ::close(fd);
    ::unlink(tmp.c_str());
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    throw Error("io_error", fmt::format("rename {}: {}", path.string(), errno_text()), ExitCode::kInternal);
  }
  fsync_dir(path.parent_path());
}

Rubric load_rubric(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("json_parse", path.string() + " is not valid JSON");
  Rubric r;
  try {
    r = j.get<Rubric>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid_rubric", fmt::format("{}: {}", path.string(), e.what()));
  }
  require_valid(r);
  return r;
}

Dataset parse_dataset(std::string_view jsonl, const Rubric& rubric) {
  require_valid(rubric);
  Dataset d;
  d.rubric = rubric;
  std::vector<std::string> violations;
  std::vector<std::pair<StudentResponse, ScoreVector>> rows;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string line(jsonl.substr(pos, end - pos));
    pos = end + 1;
    ++lineno;
    if (normalize_response_text(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      violations.push_back(fmt::format("line {}: not a JSON object", lineno));
      continue;
    }
    StudentResponse r;
    ScoreVector g;
    try {
      j.at("id").get_to(r.id);
      r.question_id = j.value("question_id", rubric.question_id);
      j.at("text").get_to(r.text);
      g = score_from_json(j, "id");
    } catch (const nlohmann::json::exception& e) {
      violations.push_back(fmt::format("line {}: {}", lineno, e.what()));
      continue;
    }
    std::vector<std::string> problems = response_violations(r);
    if (r.question_id != rubric.question_id) {
      problems.push_back(fmt::format("question_id {} does not match rubric {}", r.question_id,
                                     rubric.question_id));
    }
    for (auto& p : validate_score_vector(g, rubric)) problems.push_back(std::move(p));
    if (!seen.insert(r.id).second) problems.push_back("duplicate id " + r.id);
    for (const auto& p : problems) violations.push_back(fmt::format("line {}: {}", lineno, p));
    if (problems.empty()) rows.emplace_back(std::move(r), std::move(g));
  }
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_dataset");
  if (rows.empty()) throw ValidationError("empty_input", "dataset has no responses");
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first.id < b.first.id; });
  for (auto& [r, g] : rows) {
    d.responses.push_back(std::move(r));
    d.gold.push_back(std::move(g));
  }
  return d;
}

Dataset load_dataset(const fs::path& path, const Rubric& rubric) {
  return parse_dataset(read_file(path), rubric);
}

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::string out;
  for (std::size_t i = 0; i < dataset.responses.size(); ++i) {
    const auto& r = dataset.responses[i];
    nlohmann::json j{{"id", r.id}, {"question_id", r.question_id}, {"text", r.text},
                     {"gold", dataset.gold[i].by_subscore}, {"total", dataset.gold[i].total}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

RaterScores parse_rater_scores(const nlohmann::json& j, const Rubric& rubric) {
  RaterScores r;
  try {
    j.at("rater_id").get_to(r.rater_id);
    for (const auto& s : j.at("scores")) r.scores.push_back(score_from_json(s, "response_id"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid_rater_scores", e.what());
  }
  auto violations = rater_violations(r, rubric);
  if (!violations.empty()) throw ValidationError(std::move(violations), "invalid_rater_scores");
  return r;
}

RaterScores load_rater_scores(const fs::path& path, const Rubric& rubric) {
  const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("json_parse", path.string() + " is not valid JSON");
  return parse_rater_scores(j, rubric);
}

Split split_ids(std::vector<std::string> ids, double ratio, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError("duplicate_id", "split ids must be unique");
  }
  if (ids.size() < 5) {
    throw ValidationError("too_few_responses",
                          fmt::format("need at least 5 responses to split, found {}", ids.size()));
  }
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValidationError("out_of_range", fmt::format("split ratio {} outside (0, 1)", ratio));
  }
  const auto n = ids.size();
  auto n_test = static_cast<std::size_t>(std::llround((1.0 - ratio) * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  auto shuffled = canonical_shuffle(std::move(ids), seed);
  Split s;
  s.ratio = ratio;
  s.seed = seed;
  s.train_ids.assign(shuffled.begin(), shuffled.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test_ids.assign(shuffled.end() - static_cast<std::ptrdiff_t>(n_test), shuffled.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

Split split_dataset(const Dataset& dataset, double ratio, std::uint64_t seed) {
  return split_ids(dataset.ids(), ratio, seed);
}

std::string record_directory(std::string_view kind) {
  using namespace record_kind;
  if (kind == kConfig) return "config.d";
  if (kind == kSplit) return "splits";
  if (kind == kIrrSample || kind == kIrrRound || kind == kConsensus || kind == kExemplars) return "irr";
  if (kind == kPromptSpec || kind == kBalance) return "prompts";
  if (kind == kRun || kind == kEvaluation) return "runs";
  if (kind.starts_with("al_")) return "al";
  throw ValidationError("bad_enum", fmt::format("unknown record kind '{}'", kind));
}

ExperimentStore::ExperimentStore(fs::path home, std::string experiment_id)
    : home_(std::move(home)), id_(std::move(experiment_id)) {
  const bool ok = !id_.empty() && std::all_of(id_.begin(), id_.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && id_ != "." && id_ != "..";
  if (!ok) throw ValidationError("invalid_experiment_id", fmt::format("bad experiment id '{}'", id_));
}

fs::path ExperimentStore::dir() const { return home_ / "experiment" / id_; }

bool ExperimentStore::exists() const { return fs::exists(dir() / "MANIFEST"); }

std::vector<ManifestEntry> ExperimentStore::manifest() const {
  if (!exists()) throw NotFoundError("no experiment " + id_);
  return parse_manifest(read_file(dir() / "MANIFEST"));
}

std::string ExperimentStore::head() const {
  if (!exists()) throw NotFoundError("no experiment " + id_);
  return sha256_hex(read_file(dir() / "MANIFEST"));
}

nlohmann::json ExperimentStore::load(std::string_view kind, std::string_view digest) const {
  const fs::path path = dir() / record_directory(kind) / (std::string(digest) + ".json");
  if (!fs::exists(path)) throw NotFoundError(fmt::format("no {} record {}", kind, digest));
  const std::string bytes = read_file(path);
  if (sha256_hex(bytes) != digest) {
    throw CorruptionError(fmt::format("{} does not match its digest", path.string()));
  }
  return nlohmann::json::parse(bytes);
}

std::optional<ManifestEntry> ExperimentStore::latest(std::string_view kind,
                                                     std::string_view label) const {
  std::optional<ManifestEntry> out;
  for (auto& e : manifest()) {
    if (e.kind == kind && (label.empty() || e.label == label)) out = std::move(e);
  }
  return out;
}

std::vector<ManifestEntry> ExperimentStore::all(std::string_view kind) const {
  std::vector<ManifestEntry> out;
  for (auto& e : manifest()) {
    if (e.kind == kind) out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json ExperimentStore::config() const {
  return nlohmann::json::parse(read_file(dir() / "config"));
}

nlohmann::json ExperimentStore::dataset_ref() const {
  return nlohmann::json::parse(read_file(dir() / "dataset.ref"));
}

std::vector<std::string> ExperimentStore::list(const fs::path& home) {
  std::vector<std::string> out;
  const fs::path root = home / "experiment";
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (fs::exists(entry.path() / "MANIFEST")) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentWriter::ExperimentWriter(const ExperimentStore& store) : store_(store) {
  fs::create_directories(store_.dir());
  const fs::path lock = store_.dir() / "LOCK";
  lock_fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT, 0644);
  if (lock_fd_ < 0) {
    throw Error("io_error", fmt::format("open {}: {}", lock.string(), errno_text()), ExitCode::kInternal);
  }
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw ConflictError("lock_conflict",
                        fmt::format("experiment {} is locked by another writer", store_.id()));
  }
}

ExperimentWriter::~ExperimentWriter() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

void ExperimentWriter::create(const ExperimentStore& store, const nlohmann::json& config,
                              const nlohmann::json& dataset_ref) {
  ExperimentWriter w(store);
  if (store.exists()) throw ConflictError("already_exists", "experiment " + store.id() + " exists");
  const fs::path d = store.dir();
  for (const char* sub : {"config.d", "splits", "irr", "prompts", "runs", "al"}) {
    fs::create_directories(d / sub);
  }
  write_file_atomic(d / "config", config.dump(2) + "\n");
  write_file_atomic(d / "dataset.ref", dataset_ref.dump(2) + "\n");
  w.stage(record_kind::kConfig, config);
  // An empty MANIFEST marks the experiment as existing before the first commit.
  write_file_atomic(d / "MANIFEST", "");
  w.commit();
}

std::string ExperimentWriter::stage(std::string_view kind, const nlohmann::json& record,
                                    std::string label) {
  record_directory(kind);
  if (label.find_first_of(" \t\n") != std::string::npos) {
    throw ValidationError("invalid_label", fmt::format("record label '{}' has whitespace", label));
  }
  Staged s;
  s.kind = std::string(kind);
  s.bytes = canonical_json(record);
  s.digest = sha256_hex(s.bytes);
  s.label = std::move(label);
  std::string digest = s.digest;
  staged_.push_back(std::move(s));
  return digest;
}

void ExperimentWriter::commit(const std::optional<std::string>& expected_head) {
  if (expected_head && *expected_head != store_.head()) {
    staged_.clear();
    throw ConflictError("stale_head", "experiment changed since it was read; reload and retry");
  }
  if (staged_.empty()) return;
  const fs::path d = store_.dir();
  int seq = static_cast<int>(store_.manifest().size());
  std::string lines;
  for (const auto& s : staged_) {
    const fs::path dir = d / record_directory(s.kind);
    fs::create_directories(dir);
    const fs::path path = dir / (s.digest + ".json");
    if (!fs::exists(path)) write_file_atomic(path, s.bytes);
    lines += fmt::format("{} {} {} {}\n", ++seq, s.kind, s.digest, s.label.empty() ? "-" : s.label);
  }
  const fs::path manifest = d / "MANIFEST";
  const int fd = ::open(manifest.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) {
    throw Error("io_error", fmt::format("open {}: {}", manifest.string(), errno_text()),
                ExitCode::kInternal);
  }
  try {
    write_all(fd, lines, manifest);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  staged_.clear();
}

using nlohmann::json;

void to_json(json& j, const Split& s) {
  j = json{{"ratio", s.ratio}, {"seed", s.seed}, {"train_ids", s.train_ids}, {"test_ids", s.test_ids}};
}

void from_json(const json& j, Split& s) {
  j.at("ratio").get_to(s.ratio);
  j.at("seed").get_to(s.seed);
  j.at("train_ids").get_to(s.train_ids);
  j.at("test_ids").get_to(s.test_ids);
}

void to_json(json& j, const Dataset& d) {
  j = json{{"rubric", d.rubric}, {"responses", d.responses}, {"gold", d.gold}};
}

void from_json(const json& j, Dataset& d) {
  j.at("rubric").get_to(d.rubric);
  j.at("responses").get_to(d.responses);
  j.at("gold").get_to(d.gold);
}

void to_json(json& j, const ManifestEntry& e) {
  j = json{{"seq", e.seq}, {"kind", e.kind}, {"digest", e.digest}, {"label", e.label}};
}

}  // namespace rubric_loop
