#include "xp/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include "xp/digest.hpp"

namespace xp {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {"Experiment", "Workflow", "Task", "Algorithm", "Dataset",
                                                        "User",       "Intent",   "Metric", "Run"};
constexpr std::array<std::string_view, 9> kRelationNames = {
    "ranBy",          "hasIntent",      "usesDataset",  "usesAlgorithm",   "producedRun",
    "achievedMetric", "hasProficiency", "gaveFeedback", "partOfExperiment"};

Entity entity_from_json(const json& j) {
  return {entity_kind_from(j.at("kind").get<std::string>()), j.at("id").get<std::string>()};
}

bool is_builtin_metric(const std::string& name) {
  return std::find(kBuiltinMetrics.begin(), kBuiltinMetrics.end(), name) != kBuiltinMetrics.end();
}

}  // namespace

std::string_view to_string(EntityKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }
std::string_view to_string(Relation relation) { return kRelationNames[static_cast<std::size_t>(relation)]; }

EntityKind entity_kind_from(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<EntityKind>(i);
  throw XpError(ErrorCode::UnknownEntity, std::string(s), "unknown entity kind '" + std::string(s) + "'");
}

Relation relation_from(std::string_view s) {
  for (std::size_t i = 0; i < kRelationNames.size(); ++i)
    if (kRelationNames[i] == s) return static_cast<Relation>(i);
  throw XpError(ErrorCode::UnknownEntity, std::string(s), "unknown relation '" + std::string(s) + "'");
}

RelationSignature signature(Relation relation) {
  using K = EntityKind;
  switch (relation) {
    case Relation::ranBy: return {K::Run, K::User};
    case Relation::hasIntent: return {K::Experiment, K::Intent};
    case Relation::usesDataset: return {K::Run, K::Dataset};
    case Relation::usesAlgorithm: return {K::Run, K::Algorithm};
    case Relation::producedRun: return {K::Experiment, K::Run};
    case Relation::achievedMetric: return {K::Run, K::Metric};
    case Relation::hasProficiency: return {K::User, K::Algorithm};
    case Relation::gaveFeedback: return {K::User, K::Run};
    case Relation::partOfExperiment: return {K::Run, K::Experiment};
  }
  return {K::Run, K::Run};
}

json to_json(const Entity& e) { return {{"kind", to_string(e.kind)}, {"id", e.id}}; }

json to_json(const Triple& t) {
  return {{"head", to_json(t.head)},
          {"relation", to_string(t.relation)},
          {"tail", to_json(t.tail)},
          {"value", t.value ? json(*t.value) : json(nullptr)}};
}

std::string algorithm_name(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  for (auto it = words.rbegin(); it != words.rend(); ++it) {
    if (it->empty() || it->front() == '-') continue;
    std::string stem = std::filesystem::path(*it).stem().string();
    if (!stem.empty()) return stem;
  }
  return command;
}

std::string intent_id(const Intent& intent) {
  return std::string(to_string(intent.direction)) + "-" + intent.metric;
}

// ---- repository -----------------------------------------------------------

KnowledgeRepo::KnowledgeRepo() = default;

KnowledgeRepo::KnowledgeRepo(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(*dir_);
  std::ifstream in(*dir_ / "log.ndjson");
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    json ev = json::parse(line, nullptr, false);
    if (ev.is_discarded())
      throw XpError(ErrorCode::CorruptLog, std::to_string(line_no), "log line " + std::to_string(line_no) + " is not JSON");
    apply(state_, ev);
  }
}

void KnowledgeRepo::apply(State& state, const json& ev) {
  try {
    const std::string type = ev.at("type").get<std::string>();
    if (type == "entity") {
      state.entities.insert(entity_from_json(ev));
    } else if (type == "triple") {
      const Entity h = entity_from_json(ev.at("head"));
      const Entity t = entity_from_json(ev.at("tail"));
      const Relation r = relation_from(ev.at("relation").get<std::string>());
      std::optional<double> v;
      if (ev.contains("value") && ev.at("value").is_number()) v = ev.at("value").get<double>();
      state.triples[{h, r, t}] = v;
    } else if (type == "run") {
      RunRecord rec = run_from_json(ev.at("record"));
      state.run_index[rec.run_id] = state.runs.size();
      state.runs.push_back(std::move(rec));
    } else {
      throw XpError(ErrorCode::CorruptLog, type, "unknown log event type '" + type + "'");
    }
    state.seq = ev.at("seq").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw XpError(ErrorCode::CorruptLog, "", std::string("malformed log event: ") + e.what());
  }
}

void KnowledgeRepo::append(json event) {
  event["seq"] = state_.seq + 1;
  apply(state_, event);
  if (dir_) {
    std::ofstream out(*dir_ / "log.ndjson", std::ios::app);
    out << canonical_json(event) << '\n';
    if (!out) throw XpError(ErrorCode::IoError, (*dir_ / "log.ndjson").string(), "cannot append to log");
  }
}

bool KnowledgeRepo::add_entity_locked(const Entity& e) {
  if (state_.entities.contains(e)) return false;
  json ev = to_json(e);
  ev["type"] = "entity";
  append(std::move(ev));
  return true;
}

bool KnowledgeRepo::add_triple_locked(const Triple& t) {
  const auto sig = signature(t.relation);
  if (t.head.kind != sig.head || t.tail.kind != sig.tail)
    throw XpError(ErrorCode::SignatureMismatch, std::string(to_string(t.relation)),
                  std::string(to_string(t.relation)) + " expects " + std::string(to_string(sig.head)) + " -> " +
                      std::string(to_string(sig.tail)));
  if (state_.triples.contains({t.head, t.relation, t.tail})) return false;
  add_entity_locked(t.head);
  add_entity_locked(t.tail);
  json ev = to_json(t);
  ev["type"] = "triple";
  append(std::move(ev));
  return true;
}

bool KnowledgeRepo::add_entity(const Entity& e) {
  std::unique_lock lock(mutex_);
  return add_entity_locked(e);
}

bool KnowledgeRepo::add_triple(const Triple& t) {
  std::unique_lock lock(mutex_);
  return add_triple_locked(t);
}

std::vector<Triple> KnowledgeRepo::ingest_run(const RunRecord& record, const ExperimentSpec& spec,
                                              const std::string& user) {
  std::unique_lock lock(mutex_);
  std::vector<Triple> added;
  auto link = [&](Triple t) {
    if (add_triple_locked(t)) added.push_back(std::move(t));
  };
  const Entity exp{EntityKind::Experiment, spec.name};
  const Entity run{EntityKind::Run, record.run_id};

  if (!state_.run_index.contains(record.run_id)) {
    append({{"type", "run"}, {"record", to_json(record)}});
    add_entity_locked(run);
    if (!user.empty()) link({run, Relation::ranBy, {EntityKind::User, user}, std::nullopt});
    for (const auto& [ref, digest] : record.input_digests)
      link({run, Relation::usesDataset, {EntityKind::Dataset, digest}, std::nullopt});
    for (const auto& vp : spec.vps) {
      if (vp.kind != VpKind::Implementation) continue;
      if (const Value* v = record.configuration.find(vp.name))
        link({run, Relation::usesAlgorithm, {EntityKind::Algorithm, algorithm_name(to_display(*v))}, std::nullopt});
    }
    for (const auto& [name, value] : record.metrics)
      if (!is_builtin_metric(name)) link({run, Relation::achievedMetric, {EntityKind::Metric, name}, value});
  }
  link({exp, Relation::hasIntent, {EntityKind::Intent, intent_id(spec.intent)}, std::nullopt});
  link({exp, Relation::producedRun, run, std::nullopt});
  link({run, Relation::partOfExperiment, exp, std::nullopt});
  return added;
}

void KnowledgeRepo::add_feedback(const std::string& user, const std::string& run_id, bool valid) {
  add_triple({{EntityKind::User, user}, Relation::gaveFeedback, {EntityKind::Run, run_id}, valid ? 1.0 : 0.0});
}

void KnowledgeRepo::add_proficiency(const std::string& user, const std::string& algorithm) {
  add_triple({{EntityKind::User, user}, Relation::hasProficiency, {EntityKind::Algorithm, algorithm}, std::nullopt});
}

Redundancy KnowledgeRepo::detect_redundant(const std::string& fingerprint) const {
  if (auto rec = find_cached(fingerprint)) return RedundantExact{rec->run_id};
  return NotRedundant{};
}

std::optional<RunRecord> KnowledgeRepo::find_cached(const std::string& fingerprint) const {
  std::shared_lock lock(mutex_);
  for (const auto& r : state_.runs)
    if (r.fingerprint == fingerprint && r.status == RunStatus::Ok) return r;
  return std::nullopt;
}

std::optional<RunRecord> KnowledgeRepo::find_run(const std::string& run_id) const {
  std::shared_lock lock(mutex_);
  auto it = state_.run_index.find(run_id);
  if (it == state_.run_index.end()) return std::nullopt;
  return state_.runs[it->second];
}

std::vector<RunRecord> KnowledgeRepo::lineage(const LineageQuery& query) const {
  std::shared_lock lock(mutex_);
  std::vector<RunRecord> out;
  for (const auto& r : state_.runs) {
    bool match = false;
    switch (query.by) {
      case LineageQuery::By::Experiment:
        match = state_.triples.contains({{EntityKind::Run, r.run_id},
                                         Relation::partOfExperiment,
                                         {EntityKind::Experiment, query.key}});
        break;
      case LineageQuery::By::Dataset:
        match = std::any_of(r.input_digests.begin(), r.input_digests.end(),
                            [&](const auto& kv) { return kv.second == query.key; });
        break;
      case LineageQuery::By::Fingerprint: match = r.fingerprint == query.key; break;
    }
    if (match) out.push_back(r);
  }
  return out;
}

std::vector<RunRecord> KnowledgeRepo::runs() const {
  std::shared_lock lock(mutex_);
  return state_.runs;
}

std::vector<Entity> KnowledgeRepo::entities() const {
  std::shared_lock lock(mutex_);
  return {state_.entities.begin(), state_.entities.end()};
}

std::vector<Triple> KnowledgeRepo::triples() const {
  std::shared_lock lock(mutex_);
  std::vector<Triple> out;
  out.reserve(state_.triples.size());
  for (const auto& [key, value] : state_.triples)
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), value});
  return out;
}

bool KnowledgeRepo::has_entity(const Entity& e) const {
  std::shared_lock lock(mutex_);
  return state_.entities.contains(e);
}

std::uint64_t KnowledgeRepo::last_seq() const {
  std::shared_lock lock(mutex_);
  return state_.seq;
}

json KnowledgeRepo::snapshot_json(const State& state) {
  json entities = json::array();
  for (const auto& e : state.entities) entities.push_back(to_json(e));
  json triples = json::array();
  for (const auto& [key, value] : state.triples)
    triples.push_back(to_json(Triple{std::get<0>(key), std::get<1>(key), std::get<2>(key), value}));
  json runs = json::array();
  for (const auto& r : state.runs) runs.push_back(to_json(r));
  return {{"seq", state.seq}, {"entities", entities}, {"triples", triples}, {"runs", runs}};
}

std::string KnowledgeRepo::snapshot_text() const {
  std::shared_lock lock(mutex_);
  return canonical_json(snapshot_json(state_));
}

void KnowledgeRepo::write_snapshot() const {
  if (!dir_) return;
  const std::string text = snapshot_text();
  const auto tmp = *dir_ / "snapshot.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << text << '\n';
    if (!out) throw XpError(ErrorCode::IoError, tmp.string(), "cannot write snapshot");
  }
  std::filesystem::rename(tmp, *dir_ / "snapshot.json");
}

std::string KnowledgeRepo::replay(const std::filesystem::path& log_path) {
  State state;
  std::ifstream in(log_path);
  if (!in) throw XpError(ErrorCode::IoError, log_path.string(), "cannot read " + log_path.string());
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    json ev = json::parse(line, nullptr, false);
    if (ev.is_discarded()) throw XpError(ErrorCode::CorruptLog, log_path.string(), "log line is not JSON");
    apply(state, ev);
  }
  return canonical_json(snapshot_json(state));
}

UserProfile KnowledgeRepo::load_profile(const std::string& user) const {
  UserProfile p;
  p.user = user;
  if (!dir_) return p;
  std::shared_lock lock(mutex_);
  std::ifstream in(*dir_ / "profiles.json");
  if (!in) return p;
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains(user)) return p;
  const json& j = doc.at(user);
  p.traits = j.value("traits", std::map<std::string, std::string>{});
  p.history = j.value("history", std::map<std::string, std::vector<bool>>{});
  return p;
}

void KnowledgeRepo::save_profile(const UserProfile& profile) {
  if (!dir_) return;
  std::unique_lock lock(mutex_);
  const auto path = *dir_ / "profiles.json";
  json doc = json::object();
  if (std::ifstream in(path); in) {
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) doc = json::object();
  }
  doc[profile.user] = {{"traits", profile.traits}, {"history", profile.history}};
  std::ofstream out(path, std::ios::trunc);
  out << doc.dump(2) << '\n';
}

// ---- embeddings -----------------------------------------------------------

namespace {

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : v) x /= n;
}

}  // namespace

double score_vectors(std::span<const double> h, std::span<const double> r, std::span<const double> t) {
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double d = h[i] + r[i] - t[i];
    s += d * d;
  }
  return -std::sqrt(s);
}

EmbeddingTable train_embeddings(std::span<const Entity> entities, std::span<const Triple> triples,
                                EmbeddingOptions options) {
  if (triples.empty()) throw XpError(ErrorCode::EmptyGraph, "", "no triples to train on");

  std::set<Entity> entity_set(entities.begin(), entities.end());
  std::set<Relation> relation_set;
  for (const auto& t : triples) {
    entity_set.insert(t.head);
    entity_set.insert(t.tail);
    relation_set.insert(t.relation);
  }
  const std::vector<Entity> ents(entity_set.begin(), entity_set.end());
  const std::vector<Relation> rels(relation_set.begin(), relation_set.end());
  std::map<Entity, std::size_t> eidx;
  for (std::size_t i = 0; i < ents.size(); ++i) eidx[ents[i]] = i;
  std::map<Relation, std::size_t> ridx;
  for (std::size_t i = 0; i < rels.size(); ++i) ridx[rels[i]] = i;

  struct Idx {
    std::size_t h, r, t;
    auto operator<=>(const Idx&) const = default;
  };
  std::vector<Idx> train;
  for (const auto& t : triples) train.push_back({eidx[t.head], ridx[t.relation], eidx[t.tail]});
  std::sort(train.begin(), train.end());
  train.erase(std::unique(train.begin(), train.end()), train.end());

  std::map<EntityKind, std::vector<std::size_t>> by_kind;
  for (std::size_t i = 0; i < ents.size(); ++i) by_kind[ents[i].kind].push_back(i);

  const std::size_t d = options.dim;
  std::mt19937_64 rng(options.seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> init(-bound, bound);
  std::vector<std::vector<double>> E(ents.size(), std::vector<double>(d));
  std::vector<std::vector<double>> R(rels.size(), std::vector<double>(d));
  for (auto& v : E) {
    for (double& x : v) x = init(rng);
    normalize(v);
  }
  for (auto& v : R) {
    for (double& x : v) x = init(rng);
    normalize(v);
  }

  // Corruption candidates: other entities of the tail's kind, else any other entity.
  std::vector<std::vector<std::size_t>> corrupt(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t c : by_kind[ents[train[i].t].kind])
      if (c != train[i].t) corrupt[i].push_back(c);
    if (corrupt[i].empty())
      for (std::size_t c = 0; c < ents.size(); ++c)
        if (c != train[i].t) corrupt[i].push_back(c);
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> a(d), b(d);
  const double lr = options.learning_rate;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      if (corrupt[i].empty()) continue;
      const auto [h, r, t] = train[i];
      std::uniform_int_distribution<std::size_t> pick(0, corrupt[i].size() - 1);
      const std::size_t tc = corrupt[i][pick(rng)];
      double dp = 0.0, dn = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        a[k] = E[h][k] + R[r][k] - E[t][k];
        b[k] = E[h][k] + R[r][k] - E[tc][k];
        dp += a[k] * a[k];
        dn += b[k] * b[k];
      }
      dp = std::sqrt(dp);
      dn = std::sqrt(dn);
      if (options.margin + dp - dn <= 0.0) continue;
      const double sp = 1.0 / std::max(dp, 1e-12);
      const double sn = 1.0 / std::max(dn, 1e-12);
      for (std::size_t k = 0; k < d; ++k) {
        const double ga = a[k] * sp;
        const double gb = b[k] * sn;
        E[h][k] -= lr * (ga - gb);
        R[r][k] -= lr * (ga - gb);
        E[t][k] += lr * ga;
        E[tc][k] -= lr * gb;
      }
    }
    for (auto& v : E) normalize(v);
  }

  EmbeddingTable table;
  table.meta = options;
  for (std::size_t i = 0; i < ents.size(); ++i) table.entities[ents[i]] = std::move(E[i]);
  for (std::size_t i = 0; i < rels.size(); ++i) table.relations[rels[i]] = std::move(R[i]);
  return table;
}

EmbeddingTable train_embeddings(const KnowledgeRepo& repo, std::uint64_t seed, EmbeddingOptions options) {
  options.seed = seed;
  const auto ents = repo.entities();
  const auto trips = repo.triples();
  return train_embeddings(ents, trips, options);
}

double score_triple(const EmbeddingTable& table, const Entity& head, Relation relation, const Entity& tail) {
  auto h = table.entities.find(head);
  auto t = table.entities.find(tail);
  auto r = table.relations.find(relation);
  if (h == table.entities.end()) throw XpError(ErrorCode::UnknownEntity, head.id, "entity '" + head.id + "' not embedded");
  if (t == table.entities.end()) throw XpError(ErrorCode::UnknownEntity, tail.id, "entity '" + tail.id + "' not embedded");
  if (r == table.relations.end())
    throw XpError(ErrorCode::UnknownEntity, std::string(to_string(relation)),
                  "relation '" + std::string(to_string(relation)) + "' not embedded");
  return score_vectors(h->second, r->second, t->second);
}

std::vector<Recommendation> recommend(const EmbeddingTable& table, const RecommendContext& context,
                                      Relation relation, std::size_t k) {
  const auto sig = signature(relation);
  auto rel_it = table.relations.find(relation);
  if (rel_it == table.relations.end())
    throw XpError(ErrorCode::UnknownEntity, std::string(to_string(relation)),
                  "relation '" + std::string(to_string(relation)) + "' not embedded");
  const std::size_t d = table.meta.dim;

  auto rel = [&](Relation r) -> const std::vector<double>* {
    auto it = table.relations.find(r);
    return it == table.relations.end() ? nullptr : &it->second;
  };
  auto ent = [&](EntityKind kind, const std::optional<std::string>& id) -> const std::vector<double>* {
    if (!id) return nullptr;
    auto it = table.entities.find(Entity{kind, *id});
    return it == table.entities.end() ? nullptr : &it->second;
  };

  // Position a run would take given one context entity: v - sum(path relations).
  std::vector<std::vector<double>> positions;
  auto implied = [&](const std::vector<double>* v, std::initializer_list<Relation> path) {
    if (!v) return;
    std::vector<double> p = *v;
    for (Relation r : path) {
      const auto* rv = rel(r);
      if (!rv) return;
      for (std::size_t i = 0; i < d; ++i) p[i] -= (*rv)[i];
    }
    // Move from a run position to the relation's head kind.
    std::optional<Relation> up;
    if (sig.head == EntityKind::Experiment) up = Relation::partOfExperiment;
    else if (sig.head == EntityKind::User) up = Relation::ranBy;
    else if (sig.head != EntityKind::Run) return;
    if (up) {
      const auto* rv = rel(*up);
      if (!rv) return;
      for (std::size_t i = 0; i < d; ++i) p[i] += (*rv)[i];
    }
    positions.push_back(std::move(p));
  };
  implied(ent(EntityKind::User, context.user), {Relation::ranBy});
  implied(ent(EntityKind::Dataset, context.dataset), {Relation::usesDataset});
  implied(ent(EntityKind::Intent, context.intent), {Relation::hasIntent, Relation::partOfExperiment});
  if (positions.empty()) throw XpError(ErrorCode::NoContext, "", "no context entity is embedded");

  std::vector<double> node(d, 0.0);
  for (const auto& p : positions)
    for (std::size_t i = 0; i < d; ++i) node[i] += p[i] / static_cast<double>(positions.size());

  std::vector<Recommendation> out;
  for (const auto& [e, v] : table.entities)
    if (e.kind == sig.tail) out.push_back({e, score_vectors(node, rel_it->second, v)});
  std::sort(out.begin(), out.end(), [](const Recommendation& a, const Recommendation& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity.id < b.entity.id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

json to_json(const Recommendation& r) {
  return {{"kind", to_string(r.entity.kind)}, {"id", r.entity.id}, {"score", r.score}};
}

}  // namespace xp
