#include "xp/service.hpp"

#include <httplib.h>

#include <atomic>
#include <deque>
#include <thread>

namespace xp {

json fold_experiment(const std::string& id, const std::vector<Event>& events) {
  json s = {{"id", id},
            {"status", "queued"},
            {"seq", nullptr},
            {"runs", 0},
            {"best", nullptr},
            {"budget", {{"total_min", nullptr}, {"used_min", 0.0}}},
            {"pending_prompt", nullptr},
            {"pruned", json::array()},
            {"triggers", json::array()},
            {"error", nullptr}};
  for (const auto& e : events) {
    s["seq"] = e.seq;
    if (s["status"] == "queued") s["status"] = "running";
    switch (e.kind) {
      case EventKind::RunStarted: break;
      case EventKind::RunFinished: s["runs"] = s["runs"].get<std::size_t>() + 1; break;
      case EventKind::PromptOpened: s["pending_prompt"] = e.payload; break;
      case EventKind::PromptResolved:
        if (s["pending_prompt"].is_object() && s["pending_prompt"]["id"] == e.payload["prompt_id"])
          s["pending_prompt"] = nullptr;
        if (e.payload.contains("budget")) s["budget"] = e.payload["budget"];
        break;
      case EventKind::SchedulePruned:
        for (const auto& o : e.payload["ordinals"]) s["pruned"].push_back(o);
        break;
      case EventKind::ExperimentFinished:
        s["status"] = e.payload["status"];
        if (e.payload.contains("best")) s["best"] = e.payload["best"];
        if (e.payload.contains("budget")) s["budget"] = e.payload["budget"];
        if (e.payload.contains("error")) s["error"] = e.payload["error"];
        s["pending_prompt"] = nullptr;
        break;
      case EventKind::TriggerFired: s["triggers"].push_back(e.payload); break;
    }
  }
  return s;
}

json fold_runs(const std::vector<Event>& events) {
  json runs = json::array();
  for (const auto& e : events)
    if (e.kind == EventKind::RunFinished) runs.push_back(e.payload);
  return runs;
}

std::string sse_frame(const Event& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) + "\ndata: " +
         to_json(e).dump() + "\n\n";
}

namespace {

json error_body(std::string_view code, const std::string& message) {
  return {{"error", code}, {"message", message}};
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Blocks the experiment thread until the prompt is answered over HTTP.
class HttpResponder : public Responder {
 public:
  std::optional<Response> respond(const Prompt& prompt) override {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return shutdown_ || answers_.contains(prompt.id); });
    if (auto it = answers_.find(prompt.id); it != answers_.end()) return it->second;
    if (prompt.role == Role::Supervisor) return SupervisorResponse{SupervisorAction::Abort, {}};
    return std::nullopt;
  }

  // false when an answer was already given. Throws the interaction errors.
  bool submit(const Prompt& prompt, const Response& response) {
    std::lock_guard lock(mutex_);
    if (answers_.contains(prompt.id)) return false;
    PromptLedger ledger;
    ledger.open(prompt.id);
    check_response(prompt, response, ledger);
    answers_[prompt.id] = response;
    cv_.notify_all();
    return true;
  }

  void shutdown() {
    std::lock_guard lock(mutex_);
    shutdown_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::string, Response> answers_;
  bool shutdown_ = false;
};

struct Tracked {
  std::string id;
  ExperimentSpec spec;
  std::set<std::size_t> exclude;
  EventLog events;
  HttpResponder responder;
  std::vector<double> stream;
  std::size_t new_data = 0;
  std::size_t retrains = 0;
};

Prompt prompt_from_event(const json& p) {
  Prompt prompt;
  prompt.id = p.at("id").get<std::string>();
  prompt.role = p.at("role") == "validator" ? Role::Validator : Role::Supervisor;
  prompt.category = p.value("category", "");
  prompt.cost_min = p.value("cost_min", 0.0);
  prompt.payload = p.value("payload", json::object());
  prompt.pending = p.value("pending", std::vector<std::size_t>{});
  return prompt;
}

Direction monitor_direction(const ExperimentSpec& spec, const std::string& metric) {
  if (const MetricSpec* m = spec.find_metric(metric)) {
    if (m->direction == MetricDirection::Minimize) return Direction::Minimize;
    if (m->direction == MetricDirection::Maximize) return Direction::Maximize;
  }
  if (metric == spec.intent.metric) return spec.intent.direction;
  return Direction::Maximize;
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto v = req.get_param_value(key);
  if (v.empty()) return std::nullopt;
  return v;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  KnowledgeRepo kr;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  std::mutex mutex;  // experiments, order, queue, monitor state
  std::condition_variable queue_cv;
  std::map<std::string, std::shared_ptr<Tracked>> experiments;
  std::vector<std::string> order;
  std::deque<std::shared_ptr<Tracked>> queue;

  std::mutex embed_mutex;
  std::optional<std::pair<std::uint64_t, EmbeddingTable>> embed_cache;

  std::thread scheduler;
  std::thread listener;
  std::once_flag stopped;

  explicit Impl(ServiceOptions o) : options(std::move(o)), kr(options.store / "kr") {
    routes();
    scheduler = std::thread([this] { schedule_loop(); });
  }

  std::shared_ptr<Tracked> find(const std::string& id) {
    std::lock_guard lock(mutex);
    auto it = experiments.find(id);
    return it == experiments.end() ? nullptr : it->second;
  }

  // caller holds mutex
  bool name_taken(const std::string& name) const {
    return experiments.contains(name) || kr.has_entity({EntityKind::Experiment, name});
  }

  // caller holds mutex
  void enqueue(std::shared_ptr<Tracked> t) {
    experiments[t->id] = t;
    order.push_back(t->id);
    queue.push_back(std::move(t));
    queue_cv.notify_all();
  }

  void schedule_loop() {
    for (;;) {
      std::shared_ptr<Tracked> t;
      {
        std::unique_lock lock(mutex);
        queue_cv.wait(lock, [&] { return stopping.load() || !queue.empty(); });
        if (stopping) break;
        t = queue.front();
        queue.pop_front();
      }
      ExperimentOptions o;
      o.store = options.store;
      o.base_dir = options.base_dir;
      o.user = options.user;
      o.workers = options.workers;
      o.exclude = t->exclude;
      o.responder = &t->responder;
      o.events = &t->events;
      o.cancel = &stopping;
      try {
        run_experiment(t->spec, kr, o);
      } catch (const XpError& e) {
        t->events.emit(EventKind::ExperimentFinished,
                       {{"status", "failed"},
                        {"error", {{"code", code_name(e.code())}, {"subject", e.subject()}, {"message", e.what()}}}});
      } catch (const std::exception& e) {
        t->events.emit(EventKind::ExperimentFinished,
                       {{"status", "failed"}, {"error", {{"code", "ProcessError"}, {"message", e.what()}}}});
      }
      t->events.close();
    }
  }

  void routes() {
    server.Post("/experiments", [this](const httplib::Request& req, httplib::Response& res) {
      auto parsed = parse_experiment(req.body);
      if (auto* errs = std::get_if<std::vector<SourceError>>(&parsed)) {
        json out = json::array();
        for (const auto& e : *errs)
          out.push_back({{"line", e.line}, {"column", e.column}, {"code", code_name(e.code)}, {"message", e.message}});
        return reply(res, 422, {{"errors", out}});
      }
      auto& spec = std::get<ExperimentSpec>(parsed);
      const auto report = check_semantics(spec);
      if (!report.ok()) {
        json out = json::array();
        for (const auto& d : report.errors)
          out.push_back({{"code", code_name(d.code)}, {"subject", d.subject}, {"message", d.message}});
        return reply(res, 422, {{"errors", out}});
      }
      std::lock_guard lock(mutex);
      if (name_taken(spec.name))
        return reply(res, 409, error_body("DuplicateExperiment", "experiment " + spec.name + " already exists"));
      auto t = std::make_shared<Tracked>();
      t->id = spec.name;
      t->spec = std::move(spec);
      enqueue(t);
      reply(res, 201, {{"id", t->id}});
    });

    server.Get("/experiments", [this](const httplib::Request&, httplib::Response& res) {
      std::vector<std::shared_ptr<Tracked>> list;
      {
        std::lock_guard lock(mutex);
        for (const auto& id : order) list.push_back(experiments.at(id));
      }
      json out = json::array();
      for (const auto& t : list) {
        const auto s = fold_experiment(t->id, t->events.since(0));
        out.push_back({{"id", t->id}, {"status", s["status"]}, {"runs", s["runs"]}});
      }
      reply(res, 200, out);
    });

    server.Get(R"(/experiments/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto t = find(req.matches[1]);
      if (!t) return reply(res, 404, error_body("UnknownExperiment", "no experiment " + std::string(req.matches[1])));
      reply(res, 200, fold_experiment(t->id, t->events.since(0)));
    });

    server.Get(R"(/experiments/([^/]+)/runs)", [this](const httplib::Request& req, httplib::Response& res) {
      auto t = find(req.matches[1]);
      if (!t) return reply(res, 404, error_body("UnknownExperiment", "no experiment " + std::string(req.matches[1])));
      reply(res, 200, fold_runs(t->events.since(0)));
    });

    server.Get(R"(/experiments/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      auto t = find(req.matches[1]);
      if (!t) return reply(res, 404, error_body("UnknownExperiment", "no experiment " + std::string(req.matches[1])));
      std::uint64_t since = 0;
      if (auto s = param(req, "since")) {
        try {
          since = std::stoull(*s);
        } catch (const std::exception&) {
          return reply(res, 400, error_body("BadRequest", "since must be a sequence number"));
        }
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, t, seq = since](std::size_t, httplib::DataSink& sink) mutable {
            const auto evs = t->events.wait_since(seq, std::chrono::milliseconds(250));
            for (const auto& e : evs) {
              const auto frame = sse_frame(e);
              if (!sink.write(frame.data(), frame.size())) return false;
              seq = e.seq + 1;
            }
            if (evs.empty() && (t->events.closed() || stopping)) sink.done();
            return true;
          });
    });

    server.Post(R"(/prompts/([^/]+)/response)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto cut = id.rfind("-p");
      auto t = cut == std::string::npos ? nullptr : find(id.substr(0, cut));
      if (!t) return reply(res, 404, error_body("UnknownPrompt", "no prompt " + id));
      std::optional<Prompt> prompt;
      bool resolved = false;
      for (const auto& e : t->events.since(0)) {
        if (e.kind == EventKind::PromptOpened && e.payload.value("id", "") == id) prompt = prompt_from_event(e.payload);
        if (e.kind == EventKind::PromptResolved && e.payload.value("prompt_id", "") == id) resolved = true;
      }
      if (!prompt) return reply(res, 404, error_body("UnknownPrompt", "no open prompt " + id));
      if (resolved) return reply(res, 409, error_body("StaleResponse", "prompt " + id + " is already resolved"));
      Response response;
      try {
        response = response_from_json(json::parse(req.body));
      } catch (const XpError& e) {
        return reply(res, 422, error_body(code_name(e.code()), e.what()));
      } catch (const std::exception& e) {
        return reply(res, 400, error_body("BadRequest", e.what()));
      }
      try {
        if (!t->responder.submit(*prompt, response))
          return reply(res, 409, error_body("StaleResponse", "prompt " + id + " is already resolved"));
      } catch (const XpError& e) {
        const int status = e.code() == ErrorCode::StaleResponse ? 409 : 422;
        return reply(res, status, error_body(code_name(e.code()), e.what()));
      }
      reply(res, 200, {{"prompt", id}, {"accepted", true}});
    });

    server.Post(R"(/experiments/([^/]+)/production-metrics)",
                [this](const httplib::Request& req, httplib::Response& res) { production_metrics(req, res); });

    server.Get("/kr/recommendations", [this](const httplib::Request& req, httplib::Response& res) {
      RecommendContext ctx{param(req, "user"), param(req, "dataset"), param(req, "intent")};
      Relation relation = Relation::usesAlgorithm;
      std::size_t k = 3;
      try {
        if (auto r = param(req, "relation")) relation = relation_from(*r);
        if (auto v = param(req, "k")) k = std::stoul(*v);
      } catch (const std::exception& e) {
        return reply(res, 400, error_body("BadRequest", e.what()));
      }
      try {
        std::lock_guard lock(embed_mutex);
        const auto seq = kr.last_seq();
        if (!embed_cache || embed_cache->first != seq)
          embed_cache.emplace(seq, train_embeddings(kr, options.embedding_seed));
        json out = json::array();
        for (const auto& r : recommend(embed_cache->second, ctx, relation, k)) out.push_back(to_json(r));
        reply(res, 200, {{"relation", to_string(relation)}, {"recommendations", out}});
      } catch (const XpError& e) {
        reply(res, 422, error_body(code_name(e.code()), e.what()));
      }
    });

    server.Get("/kr/lineage", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<LineageQuery> q;
      if (auto v = param(req, "experiment")) q = LineageQuery{LineageQuery::By::Experiment, *v};
      else if (auto v = param(req, "dataset")) q = LineageQuery{LineageQuery::By::Dataset, *v};
      else if (auto v = param(req, "fingerprint")) q = LineageQuery{LineageQuery::By::Fingerprint, *v};
      if (!q) return reply(res, 400, error_body("BadRequest", "one of experiment, dataset, fingerprint is required"));
      json out = json::array();
      for (const auto& r : kr.lineage(*q)) out.push_back(to_json(r));
      reply(res, 200, out);
    });
  }

  void production_metrics(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    json body;
    try {
      body = json::parse(req.body);
    } catch (const std::exception& e) {
      return reply(res, 400, error_body("BadRequest", e.what()));
    }
    std::lock_guard lock(mutex);
    auto it = experiments.find(id);
    if (it == experiments.end()) return reply(res, 404, error_body("UnknownExperiment", "no experiment " + id));
    auto& t = *it->second;
    if (!t.spec.monitor) return reply(res, 422, error_body("InvalidMonitor", "experiment " + id + " is not monitored"));
    const auto& monitor = *t.spec.monitor;
    const std::string metric = body.value("metric", "");
    if (metric != monitor.metric)
      return reply(res, 422, error_body("UndeclaredMetric", "metric '" + metric + "' is not monitored"));

    std::vector<double> values;
    std::size_t new_data = 0;
    try {
      if (body.contains("value")) values.push_back(body.at("value").get<double>());
      if (body.contains("values"))
        for (const auto& v : body.at("values")) values.push_back(v.get<double>());
      if (body.contains("new_data")) new_data = body.at("new_data").get<std::size_t>();
    } catch (const std::exception& e) {
      return reply(res, 400, error_body("BadRequest", e.what()));
    }
    t.stream.insert(t.stream.end(), values.begin(), values.end());
    t.new_data += new_data;

    const auto decision =
        evaluate_retraining_trigger(monitor, t.stream, t.new_data, monitor_direction(t.spec, metric));
    if (!decision.fired()) return reply(res, 200, {{"trigger", nullptr}, {"observed", t.stream.size()}});

    std::string name;
    do name = id + "-retrain-" + std::to_string(++t.retrains);
    while (name_taken(name));
    const auto excluded = plan_reexecution(t.spec, kr, 0.5);
    auto re = std::make_shared<Tracked>();
    re->id = name;
    re->spec = t.spec;
    re->spec.name = name;
    re->exclude = {excluded.begin(), excluded.end()};
    json payload = {{"reason", to_string(decision.reason)},
                    {"window_mean", decision.window_mean},
                    {"reexecution", name},
                    {"excluded", excluded}};
    t.events.emit(EventKind::TriggerFired, payload);
    t.stream.clear();
    t.new_data = 0;
    enqueue(std::move(re));
    reply(res, 200, {{"trigger", payload}});
  }

  void stop() { std::call_once(stopped, [this] { shutdown(); }); }

  void shutdown() {
    {
      std::lock_guard lock(mutex);
      stopping = true;
      for (auto& [id, t] : experiments) t->responder.shutdown();
      queue_cv.notify_all();
    }
    server.stop();
    if (listener.joinable()) listener.join();
    if (scheduler.joinable()) scheduler.join();
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port)) bound = -1;
  if (bound < 0) return -1;
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void Service::stop() {
  if (impl_) impl_->stop();
}

KnowledgeRepo& Service::knowledge() { return impl_->kr; }

}  // namespace xp
