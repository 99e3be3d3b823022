#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "xp/dsl.hpp"
#include "xp/executor.hpp"
#include "xp/interaction.hpp"

namespace xp {

enum class EntityKind { Experiment, Workflow, Task, Algorithm, Dataset, User, Intent, Metric, Run };

enum class Relation {
  ranBy,
  hasIntent,
  usesDataset,
  usesAlgorithm,
  producedRun,
  achievedMetric,
  hasProficiency,
  gaveFeedback,
  partOfExperiment,
};

std::string_view to_string(EntityKind kind);
std::string_view to_string(Relation relation);
EntityKind entity_kind_from(std::string_view s);  // throws UnknownEntity
Relation relation_from(std::string_view s);       // throws UnknownEntity

struct RelationSignature {
  EntityKind head;
  EntityKind tail;
};
RelationSignature signature(Relation relation);

struct Entity {
  EntityKind kind = EntityKind::Run;
  std::string id;

  auto operator<=>(const Entity&) const = default;
};

struct Triple {
  Entity head;
  Relation relation = Relation::ranBy;
  Entity tail;
  std::optional<double> value;  // achievedMetric value, gaveFeedback verdict

  bool operator==(const Triple&) const = default;
};

json to_json(const Entity& e);
json to_json(const Triple& t);

/// Short algorithm name for an implementation command: the last word that is
/// not a flag, without directory or extension ("python3 models/cnn.py" -> "cnn").
std::string algorithm_name(const std::string& command);

std::string intent_id(const Intent& intent);

struct NotRedundant {};
struct RedundantExact {
  std::string run_id;
};
using Redundancy = std::variant<NotRedundant, RedundantExact>;

struct LineageQuery {
  enum class By { Experiment, Dataset, Fingerprint };
  By by = By::Experiment;
  std::string key;
};

/// Knowledge graph plus run records, persisted as an append-only NDJSON log
/// and a canonical snapshot. Thread-safe: one writer at a time, many readers.
class KnowledgeRepo : public RunCache {
 public:
  /// In-memory repository.
  KnowledgeRepo();
  /// Persistent repository under `dir` (log.ndjson, snapshot.json,
  /// profiles.json). Replays an existing log. Throws CorruptLog.
  explicit KnowledgeRepo(std::filesystem::path dir);

  KnowledgeRepo(const KnowledgeRepo&) = delete;
  KnowledgeRepo& operator=(const KnowledgeRepo&) = delete;

  bool add_entity(const Entity& e);
  /// Adds head and tail entities as needed. Returns false if the triple was
  /// already present. Throws SignatureMismatch.
  bool add_triple(const Triple& t);

  /// Records a run and links it to experiment, user, intent, datasets,
  /// algorithms and metrics. A run id already stored only gains the
  /// experiment links (a cache hit reused by another experiment); returns the
  /// triples actually added.
  std::vector<Triple> ingest_run(const RunRecord& record, const ExperimentSpec& spec, const std::string& user);

  void add_feedback(const std::string& user, const std::string& run_id, bool valid);
  void add_proficiency(const std::string& user, const std::string& algorithm);

  Redundancy detect_redundant(const std::string& fingerprint) const;
  std::vector<RunRecord> lineage(const LineageQuery& query) const;
  std::optional<RunRecord> find_cached(const std::string& fingerprint) const override;
  std::optional<RunRecord> find_run(const std::string& run_id) const;
  std::vector<RunRecord> runs() const;  // in ingestion order

  std::vector<Entity> entities() const;
  std::vector<Triple> triples() const;
  bool has_entity(const Entity& e) const;
  std::uint64_t last_seq() const;

  /// Canonical JSON of the whole state.
  std::string snapshot_text() const;
  /// Writes snapshot.json (persistent repositories only).
  void write_snapshot() const;
  /// Rebuilds state from a log file and returns its snapshot text.
  static std::string replay(const std::filesystem::path& log_path);

  UserProfile load_profile(const std::string& user) const;
  void save_profile(const UserProfile& profile);

  const std::optional<std::filesystem::path>& dir() const { return dir_; }

 private:
  struct State {
    std::uint64_t seq = 0;
    std::set<Entity> entities;
    std::map<std::tuple<Entity, Relation, Entity>, std::optional<double>> triples;
    std::vector<RunRecord> runs;
    std::map<std::string, std::size_t> run_index;
  };

  static void apply(State& state, const json& event);
  static json snapshot_json(const State& state);
  void append(json event);
  bool add_entity_locked(const Entity& e);
  bool add_triple_locked(const Triple& t);

  mutable std::shared_mutex mutex_;
  State state_;
  std::optional<std::filesystem::path> dir_;
};

struct EmbeddingOptions {
  std::size_t dim = 16;
  std::size_t epochs = 200;
  double margin = 1.0;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

struct EmbeddingTable {
  EmbeddingOptions meta;
  std::map<Entity, std::vector<double>> entities;
  std::map<Relation, std::vector<double>> relations;
};

/// Translational embeddings trained with a margin ranking loss and one
/// corrupted tail per positive triple. Deterministic for a given graph and
/// seed. Throws EmptyGraph.
EmbeddingTable train_embeddings(std::span<const Entity> entities, std::span<const Triple> triples,
                                EmbeddingOptions options = {});
EmbeddingTable train_embeddings(const KnowledgeRepo& repo, std::uint64_t seed, EmbeddingOptions options = {});

/// -||h + r - t||; higher is more plausible.
double score_vectors(std::span<const double> h, std::span<const double> r, std::span<const double> t);
/// Throws UnknownEntity.
double score_triple(const EmbeddingTable& table, const Entity& head, Relation relation, const Entity& tail);

struct RecommendContext {
  std::optional<std::string> user;
  std::optional<std::string> dataset;  // content digest
  std::optional<std::string> intent;   // e.g. "maximize-accuracy"
};

struct Recommendation {
  Entity entity;
  double score = 0.0;
};

/// Ranks entities of the relation's tail kind for a new node described by its
/// context. Each embedded context entity implies a position for the node; the
/// node vector is their mean. Throws NoContext.
std::vector<Recommendation> recommend(const EmbeddingTable& table, const RecommendContext& context,
                                      Relation relation, std::size_t k);

json to_json(const Recommendation& r);

}  // namespace xp
