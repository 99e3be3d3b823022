#include "xp/dsl.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace xp {

const MetricSpec* ExperimentSpec::find_metric(std::string_view name) const {
  for (const auto& m : metrics)
    if (m.name == name) return &m;
  return nullptr;
}

std::string SourceError::to_string() const {
  return std::to_string(line) + ":" + std::to_string(column) + ": " + std::string(code_name(code)) + ": " +
         message;
}

namespace {

constexpr std::array kKeywords = {
    "experiment", "intent",   "maximize",      "minimize", "workflow",   "task",       "impl",
    "abstract",   "manual",   "params",        "inputs",   "variability", "vp",        "param",
    "input",      "deploy",   "in",            "strategy", "grid",       "random",     "bayesian",
    "n",          "init",     "seed",          "metrics",  "metric",     "output",     "constraints",
    "soft",       "interaction", "checkpoint", "after",    "configurations", "role",  "supervisor",
    "validator",  "cost",     "min",           "budget",   "monitor",    "threshold",  "window",
    "min_new",
};

}  // namespace

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

namespace {

enum class Tok { Ident, String, Number, LBrace, RBrace, LParen, RParen, Semi, Comma, Eq, Colon, Dot, Arrow, Le, Ge, End };

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::String: return "string";
    case Tok::Number: return "number";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Semi: return "';'";
    case Tok::Comma: return "','";
    case Tok::Eq: return "'='";
    case Tok::Colon: return "':'";
    case Tok::Dot: return "'.'";
    case Tok::Arrow: return "'->'";
    case Tok::Le: return "'<='";
    case Tok::Ge: return "'>='";
    case Tok::End: return "end of input";
  }
  return "?";
}

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::size_t line = 1;
  std::size_t column = 1;
};

struct Failure {
  SourceError error;
};

bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (is_ident_start(c)) {
        t.kind = Tok::Ident;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) t.text.push_back(advance());
      } else if (is_digit(c) || (c == '-' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1]))) {
        t.kind = Tok::Number;
        t.text = number(t);
      } else if (c == '"') {
        t.kind = Tok::String;
        t.text = string(t);
      } else {
        t.kind = punct(t);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0'; }

  [[noreturn]] void fail(const Token& at, ErrorCode code, std::string msg) const {
    throw Failure{{at.line, at.column, code, std::move(msg)}};
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  std::string number(const Token& at) {
    std::string s;
    if (peek() == '-') s.push_back(advance());
    while (is_digit(peek())) s.push_back(advance());
    if (peek() == '.') {
      s.push_back(advance());
      if (!is_digit(peek())) fail(at, ErrorCode::InvalidNumber, "digits expected after '.' in '" + s + "'");
      while (is_digit(peek())) s.push_back(advance());
    }
    if (peek() == 'e' || peek() == 'E') {
      s.push_back(advance());
      if (peek() == '+' || peek() == '-') s.push_back(advance());
      if (!is_digit(peek())) fail(at, ErrorCode::InvalidNumber, "exponent digits expected in '" + s + "'");
      while (is_digit(peek())) s.push_back(advance());
    }
    if (is_ident_start(peek())) fail(at, ErrorCode::InvalidNumber, "malformed number '" + s + peek() + "'");
    return s;
  }

  std::string string(const Token& at) {
    advance();  // opening quote
    std::string s;
    for (;;) {
      if (pos_ >= src_.size() || peek() == '\n') fail(at, ErrorCode::UnterminatedString, "unterminated string");
      const char c = advance();
      if (c == '"') return s;
      if (c != '\\') {
        s.push_back(c);
        continue;
      }
      if (pos_ >= src_.size()) fail(at, ErrorCode::UnterminatedString, "unterminated string");
      const Token esc{Tok::String, {}, line_, col_};
      switch (advance()) {
        case '"': s.push_back('"'); break;
        case '\\': s.push_back('\\'); break;
        case 'n': s.push_back('\n'); break;
        case 't': s.push_back('\t'); break;
        default: fail(esc, ErrorCode::InvalidCharacter, "unknown escape sequence");
      }
    }
  }

  Tok punct(const Token& at) {
    const char c = advance();
    switch (c) {
      case '{': return Tok::LBrace;
      case '}': return Tok::RBrace;
      case '(': return Tok::LParen;
      case ')': return Tok::RParen;
      case ';': return Tok::Semi;
      case ',': return Tok::Comma;
      case '=': return Tok::Eq;
      case ':': return Tok::Colon;
      case '.': return Tok::Dot;
      case '-':
        if (peek() == '>') { advance(); return Tok::Arrow; }
        break;
      case '<':
        if (peek() == '=') { advance(); return Tok::Le; }
        break;
      case '>':
        if (peek() == '=') { advance(); return Tok::Ge; }
        break;
      default: break;
    }
    const auto byte = static_cast<unsigned char>(c);
    std::string shown = (byte >= 0x20 && byte < 0x7f) ? std::string(1, c) : "\\x" + [&] {
      static constexpr char kHex[] = "0123456789abcdef";
      return std::string{kHex[byte >> 4], kHex[byte & 0xf]};
    }();
    fail(at, ErrorCode::InvalidCharacter, "unexpected character '" + shown + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  ExperimentSpec experiment() {
    ExperimentSpec spec;
    keyword("experiment");
    spec.name = ident();
    expect(Tok::LBrace);
    spec.intent = intent();
    spec.workflow = workflow();
    spec.vps = variability();
    spec.strategy = strategy();
    if (at_keyword("metrics")) spec.metrics = metrics();
    if (at_keyword("constraints")) spec.constraints = constraints();
    if (at_keyword("interaction")) spec.interaction = interaction();
    if (at_keyword("monitor")) spec.monitor = monitor();
    expect(Tok::RBrace);
    if (cur().kind != Tok::End) unexpected("end of input");

    for (auto& m : spec.metrics)
      if (m.name == spec.intent.metric)
        m.direction = spec.intent.direction == Direction::Maximize ? MetricDirection::Maximize
                                                                    : MetricDirection::Minimize;
    return spec;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& take() {
    const Token& t = toks_[pos_];
    if (t.kind != Tok::End) ++pos_;
    return t;
  }

  [[noreturn]] void fail(const Token& at, ErrorCode code, std::string msg) const {
    throw Failure{{at.line, at.column, code, std::move(msg)}};
  }

  [[noreturn]] void unexpected(std::string_view wanted) const {
    const Token& t = cur();
    if (t.kind == Tok::End) {
      // Report at the last real token so the position stays inside the text.
      const Token& last = pos_ > 0 ? toks_[pos_ - 1] : t;
      fail(last, ErrorCode::UnexpectedEnd, "expected " + std::string(wanted) + " before end of input");
    }
    std::string found = t.kind == Tok::Ident || t.kind == Tok::Number ? "'" + t.text + "'"
                        : t.kind == Tok::String                       ? "string"
                                                                      : std::string(describe(t.kind));
    fail(t, ErrorCode::UnexpectedToken, "expected " + std::string(wanted) + ", found " + found);
  }

  bool at_keyword(std::string_view kw) const { return cur().kind == Tok::Ident && cur().text == kw; }
  bool at(Tok k) const { return cur().kind == k; }

  void keyword(std::string_view kw) {
    if (!at_keyword(kw)) unexpected("'" + std::string(kw) + "'");
    take();
  }

  const Token& expect(Tok k) {
    if (cur().kind != k) unexpected(describe(k));
    return take();
  }

  std::string ident() {
    if (cur().kind != Tok::Ident) unexpected("identifier");
    if (is_keyword(cur().text)) fail(cur(), ErrorCode::ReservedWord, "'" + cur().text + "' is a reserved word");
    return take().text;
  }

  std::string string_lit() { return expect(Tok::String).text; }

  double scalar() {
    const Token& t = expect(Tok::Number);
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size() || !std::isfinite(v))
      fail(t, ErrorCode::InvalidNumber, "number '" + t.text + "' is out of range");
    return v;
  }

  std::uint64_t integer() {
    if (cur().kind != Tok::Number) unexpected("integer");
    const Token& t = cur();
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size())
      fail(t, ErrorCode::InvalidNumber, "expected a non-negative integer, found '" + t.text + "'");
    take();
    return v;
  }

  Value value() {
    if (at(Tok::String)) return string_lit();
    if (at(Tok::Number)) return scalar();
    unexpected("string or number");
  }

  Intent intent() {
    keyword("intent");
    Intent i;
    if (at_keyword("maximize")) i.direction = Direction::Maximize;
    else if (at_keyword("minimize")) i.direction = Direction::Minimize;
    else unexpected("'maximize' or 'minimize'");
    take();
    i.metric = ident();
    expect(Tok::Semi);
    return i;
  }

  WorkflowSpec workflow() {
    keyword("workflow");
    expect(Tok::LBrace);
    WorkflowSpec wf;
    while (at_keyword("task")) wf.tasks.push_back(task());
    while (at(Tok::Ident)) {
      std::string from = ident();
      expect(Tok::Arrow);
      std::string to = ident();
      wf.edges.push_back({from, to});
      while (at(Tok::Arrow)) {
        take();
        from = std::move(to);
        to = ident();
        wf.edges.push_back({from, to});
      }
      expect(Tok::Semi);
    }
    expect(Tok::RBrace);
    return wf;
  }

  TaskSpec task() {
    keyword("task");
    TaskSpec t;
    t.name = ident();
    if (at_keyword("impl")) {
      take();
      t.impl = string_lit();
    } else if (at_keyword("abstract")) {
      take();
    } else if (at_keyword("manual")) {
      take();
      t.kind = TaskKind::Manual;
    } else {
      unexpected("'impl', 'abstract' or 'manual'");
    }
    if (at_keyword("params")) {
      take();
      expect(Tok::LParen);
      do {
        const Token& at_name = cur();
        auto name = ident();
        expect(Tok::Eq);
        if (!t.params.emplace(name, scalar()).second)
          fail(at_name, ErrorCode::DuplicateParam, "parameter '" + name + "' given twice");
      } while (at(Tok::Comma) && (take(), true));
      expect(Tok::RParen);
    }
    if (at_keyword("inputs")) {
      take();
      expect(Tok::LParen);
      do {
        const Token& at_name = cur();
        auto name = ident();
        expect(Tok::Eq);
        if (!t.inputs.emplace(name, string_lit()).second)
          fail(at_name, ErrorCode::DuplicateParam, "input '" + name + "' given twice");
      } while (at(Tok::Comma) && (take(), true));
      expect(Tok::RParen);
    }
    expect(Tok::Semi);
    return t;
  }

  std::vector<VariabilityPoint> variability() {
    keyword("variability");
    expect(Tok::LBrace);
    std::vector<VariabilityPoint> vps;
    while (at_keyword("vp")) {
      take();
      VariabilityPoint vp;
      vp.name = ident();
      expect(Tok::Colon);
      const std::string kind = cur().kind == Tok::Ident ? cur().text : "";
      if (kind == "impl") vp.kind = VpKind::Implementation;
      else if (kind == "param") vp.kind = VpKind::Parameter;
      else if (kind == "input") vp.kind = VpKind::Input;
      else if (kind == "deploy") vp.kind = VpKind::Deployment;
      else unexpected("'impl', 'param', 'input' or 'deploy'");
      take();
      expect(Tok::LParen);
      vp.task = ident();
      if (vp.kind == VpKind::Parameter || vp.kind == VpKind::Input) {
        expect(Tok::Dot);
        vp.member = ident();
      }
      expect(Tok::RParen);
      keyword("in");
      expect(Tok::LBrace);
      vp.domain.push_back(value());
      while (at(Tok::Comma)) {
        take();
        vp.domain.push_back(value());
      }
      expect(Tok::RBrace);
      expect(Tok::Semi);
      vps.push_back(std::move(vp));
    }
    expect(Tok::RBrace);
    return vps;
  }

  StrategySpec strategy() {
    keyword("strategy");
    StrategySpec s;
    if (at_keyword("grid")) {
      take();
      s.kind = StrategyKind::Grid;
    } else if (at_keyword("random")) {
      take();
      s.kind = StrategyKind::Random;
      expect(Tok::LParen);
      keyword("n");
      expect(Tok::Eq);
      s.n = integer();
      expect(Tok::Comma);
      keyword("seed");
      expect(Tok::Eq);
      s.seed = integer();
      expect(Tok::RParen);
    } else if (at_keyword("bayesian")) {
      take();
      s.kind = StrategyKind::Bayesian;
      expect(Tok::LParen);
      keyword("n");
      expect(Tok::Eq);
      s.n = integer();
      expect(Tok::Comma);
      keyword("init");
      expect(Tok::Eq);
      s.init = integer();
      expect(Tok::Comma);
      keyword("seed");
      expect(Tok::Eq);
      s.seed = integer();
      expect(Tok::RParen);
    } else {
      unexpected("'grid', 'random' or 'bayesian'");
    }
    expect(Tok::Semi);
    return s;
  }

  std::vector<MetricSpec> metrics() {
    keyword("metrics");
    expect(Tok::LBrace);
    std::vector<MetricSpec> out;
    while (at_keyword("metric")) {
      take();
      MetricSpec m;
      m.name = ident();
      if (at_keyword("workflow")) {
        take();
        m.scope = MetricScope::Workflow;
      } else if (at_keyword("task")) {
        take();
        m.scope = MetricScope::Task;
        expect(Tok::LParen);
        m.task = ident();
        expect(Tok::RParen);
      } else if (at_keyword("output")) {
        take();
        m.scope = MetricScope::Output;
        expect(Tok::LParen);
        m.task = ident();
        m.output = m.name;
        expect(Tok::RParen);
      } else {
        unexpected("'workflow', 'task' or 'output'");
      }
      if (at(Tok::String)) m.unit = string_lit();
      expect(Tok::Semi);
      out.push_back(std::move(m));
    }
    expect(Tok::RBrace);
    return out;
  }

  std::vector<ConstraintSpec> constraints() {
    keyword("constraints");
    expect(Tok::LBrace);
    std::vector<ConstraintSpec> out;
    while (at_keyword("metric")) {
      take();
      ConstraintSpec c;
      c.metric = ident();
      if (at(Tok::Le)) c.op = ConstraintOp::LE;
      else if (at(Tok::Ge)) c.op = ConstraintOp::GE;
      else unexpected("'<=' or '>='");
      take();
      c.bound = scalar();
      if (at_keyword("soft")) {
        take();
        c.hardness = Hardness::Soft;
      }
      expect(Tok::Semi);
      out.push_back(std::move(c));
    }
    expect(Tok::RBrace);
    return out;
  }

  InteractionPlan interaction() {
    keyword("interaction");
    expect(Tok::LBrace);
    InteractionPlan plan;
    while (at_keyword("checkpoint")) {
      take();
      InteractionPoint p;
      p.trigger = InteractionPoint::Trigger::AfterConfigurations;
      keyword("after");
      p.every = integer();
      keyword("configurations");
      keyword("role");
      if (at_keyword("supervisor")) p.role = Role::Supervisor;
      else if (at_keyword("validator")) p.role = Role::Validator;
      else unexpected("'supervisor' or 'validator'");
      take();
      keyword("cost");
      p.cost_min = scalar();
      keyword("min");
      expect(Tok::Semi);
      plan.checkpoints.push_back(std::move(p));
    }
    keyword("budget");
    plan.budget_min = scalar();
    keyword("min");
    expect(Tok::Semi);
    expect(Tok::RBrace);
    return plan;
  }

  MonitorSpec monitor() {
    keyword("monitor");
    expect(Tok::LBrace);
    MonitorSpec m;
    keyword("metric");
    m.metric = ident();
    keyword("threshold");
    m.threshold = scalar();
    keyword("window");
    m.window = integer();
    keyword("min_new");
    m.min_new = integer();
    expect(Tok::Semi);
    expect(Tok::RBrace);
    return m;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

ParseResult parse_experiment(std::string_view source) {
  try {
    auto tokens = Lexer(source).run();
    if (tokens.size() == 1) return std::vector<SourceError>{{1, 1, ErrorCode::EmptyInput, "empty experiment source"}};
    return Parser(std::move(tokens)).experiment();
  } catch (const Failure& f) {
    return std::vector<SourceError>{f.error};
  }
}

ValidationReport check_semantics(const ExperimentSpec& spec) {
  ValidationReport report;

  std::set<std::string> vp_names;
  for (const auto& vp : spec.vps)
    if (!vp_names.insert(vp.name).second)
      report.add(ErrorCode::DuplicateVp, vp.name, "variability point '" + vp.name + "' declared twice");

  report.merge(validate_workflow(spec.workflow, spec.vps));

  std::set<std::string> metric_names;
  for (const auto& m : spec.metrics) {
    if (!metric_names.insert(m.name).second)
      report.add(ErrorCode::DuplicateMetric, m.name, "metric '" + m.name + "' declared twice");
    if (m.scope != MetricScope::Workflow && !spec.workflow.find_task(m.task))
      report.add(ErrorCode::DanglingReference, m.task, "metric '" + m.name + "' refers to unknown task '" + m.task + "'");
  }
  auto require_metric = [&](const std::string& name, const std::string& where) {
    if (!metric_names.contains(name))
      report.add(ErrorCode::UndeclaredMetric, name, where + " uses undeclared metric '" + name + "'");
  };
  require_metric(spec.intent.metric, "intent");
  for (const auto& c : spec.constraints) require_metric(c.metric, "constraint");
  if (spec.monitor) {
    require_metric(spec.monitor->metric, "monitor");
    if (spec.monitor->window < 1 || spec.monitor->min_new < 1)
      report.add(ErrorCode::InvalidMonitor, spec.monitor->metric, "monitor window and min_new must be at least 1");
  }

  for (std::size_t i = 0; i < spec.interaction.checkpoints.size(); ++i) {
    const auto& p = spec.interaction.checkpoints[i];
    const std::string point = "checkpoint " + std::to_string(i + 1);
    if (!(p.cost_min > 0.0)) report.add(ErrorCode::NonPositiveCost, point, point + " must cost more than 0 min");
    if (p.every < 1) report.add(ErrorCode::InvalidCheckpoint, point, point + " must fire after at least 1 configuration");
  }
  if (spec.interaction.budget_min < 0.0)
    report.add(ErrorCode::NegativeBudget, "budget", "interaction budget must not be negative");

  const std::size_t space = space_size(spec.vps);
  if (space > 0) {
    try {
      translate_intent(spec.intent, spec.strategy, space);
    } catch (const XpError& e) {
      report.add(e.code(), e.subject(), e.what());
    }
  }
  return report;
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

std::string emit(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  return quote(std::get<std::string>(v));
}

}  // namespace

std::string canonical_form(const ExperimentSpec& spec) {
  std::ostringstream os;
  os << "experiment " << spec.name << " {\n";
  os << "  intent " << to_string(spec.intent.direction) << ' ' << spec.intent.metric << ";\n";

  os << "  workflow {\n";
  for (const auto& t : spec.workflow.tasks) {
    os << "    task " << t.name;
    if (t.kind == TaskKind::Manual) os << " manual";
    else if (t.impl) os << " impl " << quote(*t.impl);
    else os << " abstract";
    if (!t.params.empty()) {
      os << " params(";
      bool first = true;
      for (const auto& [k, v] : t.params) {
        os << (first ? "" : ", ") << k << '=' << emit(v);
        first = false;
      }
      os << ')';
    }
    if (!t.inputs.empty()) {
      os << " inputs(";
      bool first = true;
      for (const auto& [k, v] : t.inputs) {
        os << (first ? "" : ", ") << k << '=' << quote(v);
        first = false;
      }
      os << ')';
    }
    os << ";\n";
  }
  for (const auto& e : spec.workflow.edges) os << "    " << e.from << " -> " << e.to << ";\n";
  os << "  }\n";

  os << "  variability {\n";
  for (const auto& vp : spec.vps) {
    os << "    vp " << vp.name << ": " << to_string(vp.kind) << '(' << vp.task;
    if (vp.kind == VpKind::Parameter || vp.kind == VpKind::Input) os << '.' << vp.member;
    os << ") in {";
    for (std::size_t i = 0; i < vp.domain.size(); ++i) os << (i ? ", " : "") << emit(vp.domain[i]);
    os << "};\n";
  }
  os << "  }\n";

  const auto& s = spec.strategy;
  switch (s.kind) {
    case StrategyKind::Grid: os << "  strategy grid;\n"; break;
    case StrategyKind::Random: os << "  strategy random(n=" << s.n << ", seed=" << s.seed << ");\n"; break;
    case StrategyKind::Bayesian:
      os << "  strategy bayesian(n=" << s.n << ", init=" << s.init << ", seed=" << s.seed << ");\n";
      break;
  }

  if (!spec.metrics.empty()) {
    os << "  metrics {\n";
    for (const auto& m : spec.metrics) {
      os << "    metric " << m.name << ' ';
      switch (m.scope) {
        case MetricScope::Workflow: os << "workflow"; break;
        case MetricScope::Task: os << "task(" << m.task << ')'; break;
        case MetricScope::Output: os << "output(" << m.task << ')'; break;
      }
      if (!m.unit.empty()) os << ' ' << quote(m.unit);
      os << ";\n";
    }
    os << "  }\n";
  }

  if (!spec.constraints.empty()) {
    os << "  constraints {\n";
    for (const auto& c : spec.constraints) {
      os << "    metric " << c.metric << (c.op == ConstraintOp::LE ? " <= " : " >= ") << format_number(c.bound);
      if (c.hardness == Hardness::Soft) os << " soft";
      os << ";\n";
    }
    os << "  }\n";
  }

  const auto& ip = spec.interaction;
  if (!ip.checkpoints.empty() || ip.budget_min != 0.0) {
    os << "  interaction {\n";
    for (const auto& p : ip.checkpoints)
      os << "    checkpoint after " << p.every << " configurations role " << to_string(p.role) << " cost "
         << format_number(p.cost_min) << " min;\n";
    os << "    budget " << format_number(ip.budget_min) << " min;\n";
    os << "  }\n";
  }

  if (spec.monitor) {
    const auto& m = *spec.monitor;
    os << "  monitor {\n    metric " << m.metric << " threshold " << format_number(m.threshold) << " window "
       << m.window << " min_new " << m.min_new << ";\n  }\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace xp
