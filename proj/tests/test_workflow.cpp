#include <gtest/gtest.h>

#include <random>

#include "support/fixture.hpp"
#include "xp/digest.hpp"
#include "xp/workflow.hpp"

using namespace xp;
using namespace xp::testing;

namespace {

TaskSpec task(std::string name, std::optional<std::string> impl = "run") {
  TaskSpec t;
  t.name = std::move(name);
  t.impl = std::move(impl);
  return t;
}

VariabilityPoint vp(std::string name, VpKind kind, std::string task, std::string member, std::vector<Value> domain) {
  return {std::move(name), kind, std::move(task), std::move(member), std::move(domain)};
}

// the motivating chain, built by hand
struct Chain {
  WorkflowSpec wf;
  std::vector<VariabilityPoint> vps;

  Chain() {
    const std::vector<std::string> names = {"read_data", "add_padding", "split_data", "train_model",
                                            "evaluate_model"};
    for (const auto& n : names) wf.tasks.push_back(task(n));
    wf.tasks[0].inputs["data"] = "data.csv";
    wf.tasks[3].impl.reset();
    wf.tasks[3].params["lr"] = 0.01;
    for (std::size_t i = 0; i + 1 < names.size(); ++i) wf.edges.push_back({names[i], names[i + 1]});
    vps.push_back(vp("model", VpKind::Implementation, "train_model", "", {"snn", "rnn", "cnn"}));
    vps.push_back(vp("lr", VpKind::Parameter, "train_model", "lr", {0.001, 0.01, 0.1}));
  }
};

TEST(Validate, MotivatingChainIsValid) {
  Chain c;
  const auto report = validate_workflow(c.wf, c.vps);
  EXPECT_TRUE(report.ok()) << report.errors.front().message;
  EXPECT_EQ(topological_order(c.wf),
            (std::vector<std::string>{"read_data", "add_padding", "split_data", "train_model", "evaluate_model"}));
}

TEST(Validate, TwoCycleReportsPath) {
  WorkflowSpec wf;
  wf.tasks = {task("A"), task("B")};
  wf.edges = {{"A", "B"}, {"B", "A"}};
  const auto report = validate_workflow(wf, {});
  ASSERT_TRUE(report.has(ErrorCode::CycleDetected));
  for (const auto& d : report.errors)
    if (d.code == ErrorCode::CycleDetected) EXPECT_EQ(d.path, (std::vector<std::string>{"A", "B", "A"}));
  EXPECT_THROW(topological_order(wf), XpError);
}

TEST(Validate, AbstractTaskWithoutImplementationVp) {
  Chain c;
  c.vps.erase(c.vps.begin());
  const auto report = validate_workflow(c.wf, c.vps);
  ASSERT_TRUE(report.has(ErrorCode::UnresolvedAbstractTask));
  EXPECT_EQ(report.errors.front().subject, "train_model");
}

TEST(Validate, StructuralErrors) {
  Chain c;
  c.wf.edges.push_back({"evaluate_model", "ghost"});
  EXPECT_TRUE(validate_workflow(c.wf, c.vps).has(ErrorCode::DanglingReference));

  Chain d;
  d.wf.tasks.push_back(task("read_data"));
  EXPECT_TRUE(validate_workflow(d.wf, d.vps).has(ErrorCode::DuplicateTask));

  Chain e;
  e.vps.push_back(vp("model2", VpKind::Implementation, "train_model", "", {"x"}));
  EXPECT_TRUE(validate_workflow(e.wf, e.vps).has(ErrorCode::DuplicateImplementationVp));

  Chain f;
  f.vps[1].domain = {0.1, 0.1};
  EXPECT_TRUE(validate_workflow(f.wf, f.vps).has(ErrorCode::DuplicateValue));

  Chain g;
  g.vps[1].domain.clear();
  EXPECT_TRUE(validate_workflow(g.wf, g.vps).has(ErrorCode::EmptyDomain));

  Chain h;
  h.vps.push_back(vp("mom", VpKind::Parameter, "train_model", "momentum", {0.9}));
  EXPECT_TRUE(validate_workflow(h.wf, h.vps).has(ErrorCode::DanglingReference));

  Chain m;
  m.wf.tasks[4].kind = TaskKind::Manual;
  EXPECT_TRUE(validate_workflow(m.wf, m.vps).has(ErrorCode::InvalidTask));
  m.wf.tasks[4].impl.reset();
  EXPECT_TRUE(validate_workflow(m.wf, m.vps).ok());

  Chain t;
  t.wf.tasks[0].timeout_s = 0;
  EXPECT_TRUE(validate_workflow(t.wf, t.vps).has(ErrorCode::InvalidTask));
}

TEST(Expand, MotivatingSpaceHasNine) {
  Chain c;
  const auto cfgs = expand_configurations(c.vps);
  ASSERT_EQ(cfgs.size(), 9u);
  EXPECT_EQ(*cfgs[0].find("model"), Value("snn"));
  EXPECT_EQ(*cfgs[0].find("lr"), Value(0.001));
  EXPECT_EQ(*cfgs[1].find("lr"), Value(0.01));  // last VP fastest
  EXPECT_EQ(*cfgs[3].find("model"), Value("rnn"));
}

TEST(Expand, NoVpsGivesOneEmptyConfiguration) {
  const auto cfgs = expand_configurations({});
  ASSERT_EQ(cfgs.size(), 1u);
  EXPECT_TRUE(cfgs[0].assignment.empty());
  EXPECT_EQ(cfgs[0].ordinal, 0u);
}

TEST(Expand, MatchesNestedLoopOracle) {
  std::vector<VariabilityPoint> vps = {vp("a", VpKind::Parameter, "t", "a", {1.0, 2.0}),
                                       vp("b", VpKind::Parameter, "t", "b", {"x"}),
                                       vp("c", VpKind::Parameter, "t", "c", {10.0, 20.0, 30.0, 40.0})};
  const auto cfgs = expand_configurations(vps);
  ASSERT_EQ(cfgs.size(), 8u);
  std::size_t k = 0;
  for (const auto& a : vps[0].domain)
    for (const auto& b : vps[1].domain)
      for (const auto& c : vps[2].domain) {
        EXPECT_EQ(cfgs[k].ordinal, k);
        EXPECT_EQ(cfgs[k].assignment,
                  (std::vector<std::pair<std::string, Value>>{{"a", a}, {"b", b}, {"c", c}}));
        ++k;
      }
}

TEST(Expand, EmptyDomainThrows) {
  std::vector<VariabilityPoint> vps = {vp("a", VpKind::Parameter, "t", "a", {})};
  try {
    expand_configurations(vps);
    FAIL();
  } catch (const XpError& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDomain);
    EXPECT_EQ(e.subject(), "a");
  }
}

TEST(Expand, CountIsProductOfDomainSizes) {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<VariabilityPoint> vps;
    const int n = std::uniform_int_distribution<int>(0, 5)(rng);
    std::size_t product = 1;
    for (int i = 0; i < n; ++i) {
      const int size = std::uniform_int_distribution<int>(1, 5)(rng);
      std::vector<Value> domain;
      for (int v = 0; v < size; ++v) domain.emplace_back(static_cast<double>(v));
      product *= static_cast<std::size_t>(size);
      vps.push_back(vp("v" + std::to_string(i), VpKind::Parameter, "t", "p", domain));
    }
    const auto cfgs = expand_configurations(vps);
    ASSERT_EQ(cfgs.size(), product);
    EXPECT_EQ(space_size(vps), product);
    std::set<std::vector<std::pair<std::string, Value>>> distinct;
    for (std::size_t k = 0; k < cfgs.size(); ++k) {
      EXPECT_EQ(cfgs[k].ordinal, k);
      ASSERT_EQ(cfgs[k].assignment.size(), vps.size());
      distinct.insert(cfgs[k].assignment);
    }
    EXPECT_EQ(distinct.size(), product);
  }
}

TEST(Expand, SpaceSizeSaturates) {
  std::vector<Value> big;
  for (int i = 0; i < 1000; ++i) big.emplace_back(static_cast<double>(i));
  std::vector<VariabilityPoint> vps;
  for (int i = 0; i < 8; ++i) vps.push_back(vp("v" + std::to_string(i), VpKind::Parameter, "t", "p", big));
  EXPECT_EQ(space_size(vps), std::numeric_limits<std::size_t>::max());
  EXPECT_THROW(expand_configurations(vps), XpError);
}

TEST(Instantiate, SubstitutesImplementationAndParameter) {
  Chain c;
  const auto cfgs = expand_configurations(c.vps);
  const auto caw = instantiate_caw(c.wf, c.vps, cfgs[7]);
  const auto* train = caw.workflow.find_task("train_model");
  ASSERT_TRUE(train->impl);
  EXPECT_EQ(*train->impl, "cnn");
  EXPECT_EQ(train->params.at("lr"), Value(0.01));
  EXPECT_EQ(caw.workflow.edges, c.wf.edges);
  EXPECT_EQ(*caw.workflow.find_task("read_data"), *c.wf.find_task("read_data"));
}

TEST(Instantiate, EmptyConfigurationIsIdentity) {
  WorkflowSpec wf;
  wf.tasks = {task("a"), task("b")};
  wf.edges = {{"a", "b"}};
  const auto caw = instantiate_caw(wf, {}, Configuration{});
  EXPECT_EQ(caw.workflow, wf);
  EXPECT_TRUE(caw.deployment_labels.empty());
}

TEST(Instantiate, InputAndDeploymentVps) {
  WorkflowSpec wf;
  wf.tasks = {task("load"), task("fit")};
  wf.tasks[0].inputs["data"] = "hourly.csv";
  wf.edges = {{"load", "fit"}};
  std::vector<VariabilityPoint> vps = {vp("granularity", VpKind::Input, "load", "data", {"hourly.csv", "daily.csv"}),
                                       vp("device", VpKind::Deployment, "fit", "", {"cpu", "gpu"})};
  ASSERT_TRUE(validate_workflow(wf, vps).ok());
  const auto cfgs = expand_configurations(vps);
  const auto caw = instantiate_caw(wf, vps, cfgs[3]);
  EXPECT_EQ(caw.workflow.find_task("load")->inputs.at("data"), "daily.csv");
  EXPECT_EQ(caw.deployment_labels.at("fit"), "gpu");
  EXPECT_TRUE(caw.input_vps.contains("granularity"));
}

TEST(Instantiate, RejectsForeignValues) {
  Chain c;
  auto cfg = expand_configurations(c.vps)[0];
  cfg.assignment[1].second = 0.5;
  try {
    instantiate_caw(c.wf, c.vps, cfg);
    FAIL();
  } catch (const XpError& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidAssignment);
    EXPECT_EQ(e.subject(), "lr");
  }
  cfg.assignment.pop_back();
  EXPECT_THROW(instantiate_caw(c.wf, c.vps, cfg), XpError);
}

TEST(Instantiate, PureAndFullyResolved) {
  Chain c;
  for (const auto& cfg : expand_configurations(c.vps)) {
    const auto a = instantiate_caw(c.wf, c.vps, cfg);
    const auto b = instantiate_caw(c.wf, c.vps, cfg);
    EXPECT_EQ(a, b);
    for (const auto& t : a.workflow.tasks) EXPECT_FALSE(t.is_abstract()) << t.name;
  }
}

TEST(Fingerprint, DeterministicAndDistinguishesConfigurations) {
  Chain c;
  const std::map<std::string, std::string> digests = {{"data.csv", sha256_hex("x,y\n1,0\n")}};
  std::set<std::string> seen;
  for (const auto& cfg : expand_configurations(c.vps)) {
    const auto caw = instantiate_caw(c.wf, c.vps, cfg);
    const auto fp = fingerprint_caw(caw, digests);
    EXPECT_EQ(fp, fingerprint_caw(caw, digests));
    EXPECT_EQ(fp.size(), 64u);
    EXPECT_EQ(fp.find_first_not_of("0123456789abcdef"), std::string::npos);
    seen.insert(fp);
  }
  EXPECT_EQ(seen.size(), 9u);
}

TEST(Fingerprint, FollowsFileContentNotPath) {
  TempDir tmp;
  write_file(tmp / "a.csv", "1,2\n");
  write_file(tmp / "b.csv", "1,2\n");
  Chain c;
  const auto caw = instantiate_caw(c.wf, c.vps, expand_configurations(c.vps)[4]);
  const auto before = fingerprint_caw(caw, {{"data.csv", file_digest(tmp / "a.csv")}});
  EXPECT_EQ(before, fingerprint_caw(caw, {{"data.csv", file_digest(tmp / "b.csv")}}));
  write_file(tmp / "a.csv", "1,3\n");
  EXPECT_NE(before, fingerprint_caw(caw, {{"data.csv", file_digest(tmp / "a.csv")}}));
}

TEST(Fingerprint, MissingDigestThrows) {
  Chain c;
  const auto caw = instantiate_caw(c.wf, c.vps, expand_configurations(c.vps)[0]);
  try {
    fingerprint_caw(caw, {});
    FAIL();
  } catch (const XpError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingDigest);
    EXPECT_EQ(e.subject(), "data.csv");
  }
}

TEST(Fingerprint, ConfigKeyIgnoresData) {
  Chain c;
  const auto cfg = expand_configurations(c.vps)[2];
  const auto h = workflow_hash(c.wf);
  EXPECT_EQ(config_key(h, cfg), config_key(h, cfg));
  EXPECT_NE(config_key(h, cfg), config_key(h, expand_configurations(c.vps)[1]));
}

// FIPS 180-2 test vectors
TEST(Digest, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST(Digest, CanonicalJsonSortsKeysWithoutWhitespace) {
  const json j = json::parse(R"({ "b": 1, "a": {"d": [1, 2], "c": "x"} })");
  EXPECT_EQ(canonical_json(j), R"({"a":{"c":"x","d":[1,2]},"b":1})");
}

TEST(Value, NumberFormattingRoundTrips) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double x = i % 2 ? u(rng) : u(rng) * 1e-9;
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
  EXPECT_EQ(format_number(0.01), "0.01");
  EXPECT_EQ(format_number(3.0), "3");
}

}  // namespace
