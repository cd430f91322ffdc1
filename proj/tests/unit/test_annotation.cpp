#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <set>
#include <thread>

#include "../support/temp_dir.hpp"
#include "asrimpact/annotation/server.hpp"
#include "asrimpact/annotation/store.hpp"

using namespace asrimpact;
using namespace asrimpact::annotation;
using asrimpact::testing::TempDir;

namespace {

std::vector<LabeledExample> examples(int n) {
  std::vector<LabeledExample> out;
  for (int i = 0; i < n; ++i) {
    LabeledExample e;
    char id[16];
    std::snprintf(id, sizeof id, "ex-%02d", i);
    e.id = id;
    e.context = {{Speaker::doctor, "how are you feeling"}};
    e.gold_final = "there is some extra bleeding";
    e.hyp_final = "there isn't some extra bleeding";
    e.label = 2;
    e.justification = "should be hidden";
    out.push_back(e);
  }
  return out;
}

AnnotationRecord rec(const std::string& ex, const std::string& who, int label, std::string why = "reason") {
  return AnnotationRecord{ex, who, label, std::move(why), 0};
}

AdjudicationRecord adj(const std::string& ex, int label, std::vector<std::string> who = {"alice"}) {
  return AdjudicationRecord{ex, label, std::move(who), "met and agreed", 0};
}

struct Fixture {
  TempDir dir{"annotation"};
  ManualClock clock{std::chrono::system_clock::time_point(std::chrono::milliseconds(1'700'000'000'000))};
  StoreOptions options;
  std::vector<LabeledExample> items;

  explicit Fixture(int n = 3) : items(examples(n)) {
    options.seed = 7;
    options.clock = &clock;
    options.bootstrap.iterations = 50;
  }

  std::unique_ptr<AnnotationStore> open() const {
    return std::make_unique<AnnotationStore>(dir.path(), items, std::vector<std::string>{"alice", "bob"}, options);
  }
};

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.kind();
  }
  FAIL("expected a ServiceError");
  return ErrorKind::storage;
}

}  // namespace

TEST_CASE("next task order") {
  Fixture f(3);
  auto store = f.open();

  SUBCASE("fresh annotator gets every example once, then none") {
    std::set<std::string> seen;
    for (int i = 0; i < 3; ++i) {
      const auto t = store->next_task("alice");
      REQUIRE(t.has_value());
      CHECK(t->done == static_cast<std::size_t>(i));
      CHECK(t->total == 3);
      CHECK_FALSE(t->example.label.has_value());
      CHECK_FALSE(t->example.justification.has_value());
      seen.insert(t->example.id);
      store->submit_label(rec(t->example.id, "alice", 0, ""));
    }
    CHECK(seen.size() == 3);
    CHECK_FALSE(store->next_task("alice").has_value());
  }
  SUBCASE("re-requesting without submitting returns the same task") {
    const auto a = store->next_task("alice");
    const auto b = store->next_task("alice");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->example.id == b->example.id);
  }
  SUBCASE("unknown annotator") {
    CHECK(kind_of([&] { store->next_task("mallory"); }) == ErrorKind::unknown_annotator);
  }
}

TEST_CASE("annotators have independent orders with full coverage") {
  Fixture f(12);
  auto store = f.open();
  std::vector<std::string> order_a;
  std::vector<std::string> order_b;
  while (auto t = store->next_task("alice")) {
    order_a.push_back(t->example.id);
    store->submit_label(rec(t->example.id, "alice", 0));
  }
  while (auto t = store->next_task("bob")) {
    order_b.push_back(t->example.id);
    store->submit_label(rec(t->example.id, "bob", 0));
  }
  CHECK(order_a.size() == 12);
  CHECK(std::set<std::string>(order_a.begin(), order_a.end()).size() == 12);
  CHECK(std::set<std::string>(order_b.begin(), order_b.end()).size() == 12);
  CHECK(order_a != order_b);

  // Same seed, same order after a restart.
  Fixture g(12);
  auto again = g.open();
  CHECK(again->next_task("alice")->example.id == order_a.front());
}

TEST_CASE("label submission rules") {
  Fixture f(3);
  auto store = f.open();
  const auto stored = store->submit_label(rec("ex-00", "alice", 2, "negation flips the finding"));
  CHECK(stored.created_at == 1'700'000'000'000);
  CHECK(kind_of([&] { store->submit_label(rec("ex-00", "alice", 3)); }) == ErrorKind::invalid);
  CHECK(kind_of([&] { store->submit_label(rec("ex-00", "alice", -1)); }) == ErrorKind::invalid);
  CHECK(kind_of([&] { store->submit_label(rec("ex-00", "alice", 1, "")); }) == ErrorKind::invalid);
  CHECK(kind_of([&] { store->submit_label(rec("ex-00", "alice", 2, "  \n")); }) == ErrorKind::invalid);
  CHECK(kind_of([&] { store->submit_label(rec("ex-99", "alice", 0)); }) == ErrorKind::not_found);
  CHECK(kind_of([&] { store->submit_label(rec("ex-00", "mallory", 0)); }) == ErrorKind::unknown_annotator);
  store->submit_label(rec("ex-00", "alice", 0, ""));

  SUBCASE("resubmission replaces the live record and archives the old one") {
    f.clock.advance(std::chrono::seconds(5));
    store->submit_label(rec("ex-00", "alice", 1, "minor wording"));
    const auto live = store->live_records();
    REQUIRE(live.size() == 1);
    CHECK(live[0].label == 1);
    CHECK(live[0].created_at == 1'700'000'005'000);
    const auto archived = store->archived_records();
    REQUIRE(archived.size() == 2);
    CHECK(archived[0].label == 2);
    CHECK(archived[1].label == 0);
  }
  SUBCASE("a label-2 record shows up in agreement") {
    store->submit_label(rec("ex-00", "alice", 2, "negation"));
    store->submit_label(rec("ex-00", "bob", 2, "negation"));
    const auto pairs = store->agreement();
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].example_ids == std::vector<std::string>{"ex-00"});
    CHECK(pairs[0].report.per_class_confusion[2][2] == 1);
  }
}

TEST_CASE("agreement report") {
  Fixture f(4);
  auto store = f.open();
  CHECK(kind_of([&] { store->agreement(); }) == ErrorKind::insufficient_overlap);

  SUBCASE("identical labels") {
    const int labels[] = {0, 1, 2, 1};
    for (int i = 0; i < 4; ++i) {
      store->submit_label(rec(f.items[i].id, "alice", labels[i]));
      store->submit_label(rec(f.items[i].id, "bob", labels[i]));
    }
    const auto r = store->agreement().at(0).report;
    CHECK(r.percent_agreement == 1.0);
    CHECK(r.kappa == 1.0);
  }
  SUBCASE("the four-item fixture") {
    const int a[] = {0, 0, 1, 2};
    const int b[] = {0, 1, 1, 2};
    for (int i = 0; i < 4; ++i) {
      store->submit_label(rec(f.items[i].id, "alice", a[i]));
      store->submit_label(rec(f.items[i].id, "bob", b[i]));
    }
    const auto pair = store->agreement().at(0);
    CHECK(pair.annotator_a == "alice");
    CHECK(pair.report.n == 4);
    CHECK(pair.report.percent_agreement == 0.75);
    // p_o = 3/4, p_e = (2*1 + 1*2 + 1*1) / 16 = 5/16.
    CHECK(pair.report.kappa == doctest::Approx((0.75 - 5.0 / 16) / (1 - 5.0 / 16)).epsilon(1e-12));
    CHECK(pair.report.kappa == doctest::Approx(0.6364).epsilon(1e-4));

    const stats::LabelSeries sa{pair.example_ids, {0, 0, 1, 2}};
    const stats::LabelSeries sb{pair.example_ids, {0, 1, 1, 2}};
    const auto direct = stats::agreement_report(sa, sb, f.options.bootstrap);
    CHECK(pair.report.kappa == direct.kappa);
    CHECK(pair.report.percent_agreement == direct.percent_agreement);
    CHECK(pair.report.per_class_confusion == direct.per_class_confusion);
    CHECK(pair.report.kappa_ci.low == direct.kappa_ci.low);
    CHECK(pair.report.kappa_ci.high == direct.kappa_ci.high);
  }
  SUBCASE("only the doubly annotated subset counts") {
    store->submit_label(rec("ex-00", "alice", 0));
    store->submit_label(rec("ex-00", "bob", 0));
    store->submit_label(rec("ex-01", "alice", 2));
    CHECK(store->agreement().at(0).report.n == 1);
  }
}

TEST_CASE("adjudication queue and resolution") {
  Fixture f(4);
  auto store = f.open();
  CHECK(store->adjudication_queue().empty());
  store->submit_label(rec("ex-00", "alice", 0));
  store->submit_label(rec("ex-00", "bob", 1));
  store->submit_label(rec("ex-01", "alice", 0));
  store->submit_label(rec("ex-01", "bob", 2));
  store->submit_label(rec("ex-02", "alice", 1));
  store->submit_label(rec("ex-02", "bob", 1));
  store->submit_label(rec("ex-03", "alice", 2));

  auto queue = store->adjudication_queue();
  REQUIRE(queue.size() == 2);
  CHECK(queue[0].example.id == "ex-01");
  CHECK(queue[0].max_distance == 2);
  CHECK(queue[1].example.id == "ex-00");
  REQUIRE(queue[0].records.size() == 2);
  CHECK(queue[0].records[0].annotator_id == "alice");
  CHECK(queue[0].records[1].label == 2);

  store->resolve(adj("ex-01", 2));
  queue = store->adjudication_queue();
  REQUIRE(queue.size() == 1);
  CHECK(queue[0].example.id == "ex-00");

  auto gold = store->export_gold();
  REQUIRE(gold.size() == 2);
  CHECK(gold[0].id == "ex-01");
  CHECK(gold[0].label == 2);
  CHECK(gold[0].justification == "met and agreed");
  CHECK(gold[1].id == "ex-02");
  CHECK(gold[1].label == 1);

  SUBCASE("confirming an agreed example is allowed") {
    store->resolve(adj("ex-02", 0));
    CHECK(store->export_gold()[1].label == 0);
  }
  SUBCASE("a second resolution replaces the first and keeps both") {
    f.clock.advance(std::chrono::seconds(1));
    store->resolve(adj("ex-01", 1, {"bob"}));
    CHECK(store->export_gold()[0].label == 1);
    const auto history = store->adjudication_history();
    REQUIRE(history.size() == 2);
    CHECK(history[0].final_label == 2);
    CHECK(history[1].final_label == 1);
    CHECK(history[1].created_at > history[0].created_at);
  }
  SUBCASE("stale resolutions conflict when asked to") {
    CHECK(kind_of([&] { store->resolve(adj("ex-01", 0), true); }) == ErrorKind::conflict);
    store->resolve(adj("ex-00", 1), true);
    CHECK(store->adjudication_queue().empty());
  }
  SUBCASE("errors") {
    CHECK(kind_of([&] { store->resolve(adj("ex-99", 0)); }) == ErrorKind::not_found);
    CHECK(kind_of([&] { store->resolve(adj("ex-00", 3)); }) == ErrorKind::invalid);
    CHECK(kind_of([&] { store->resolve(adj("ex-00", 0, {})); }) == ErrorKind::invalid);
    CHECK(kind_of([&] { store->resolve(adj("ex-00", 0, {"mallory"})); }) == ErrorKind::unknown_annotator);
  }
  SUBCASE("a single label is neither unanimous nor queued") {
    for (const auto& e : store->export_gold()) CHECK(e.id != "ex-03");
  }
}

TEST_CASE("durability across restarts") {
  Fixture f(4);
  {
    auto store = f.open();
    store->submit_label(rec("ex-00", "alice", 0));
    store->submit_label(rec("ex-00", "bob", 2, "flipped"));
    store->submit_label(rec("ex-00", "bob", 1, "less sure"));
    store->resolve(adj("ex-00", 1));
  }
  auto reopened = f.open();
  CHECK(reopened->live_records().size() == 2);
  CHECK(reopened->archived_records().size() == 1);
  CHECK(reopened->adjudication_history().size() == 1);
  CHECK(reopened->export_gold().at(0).label == 1);

  SUBCASE("compaction keeps the state and later events") {
    reopened->compact();
    CHECK(std::filesystem::file_size(f.dir.path() / "events.log") == 0);
    reopened->submit_label(rec("ex-01", "alice", 2, "dose"));
    reopened.reset();
    auto again = f.open();
    CHECK(again->live_records().size() == 3);
    CHECK(again->archived_records().size() == 1);
    CHECK(again->export_gold().size() == 1);
  }
  SUBCASE("a crash between snapshot and truncation does not double-apply") {
    const auto log = f.dir.path() / "events.log";
    std::ifstream in(log, std::ios::binary);
    const std::string before((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    reopened->compact();
    reopened.reset();
    std::ofstream(log, std::ios::binary | std::ios::trunc) << before;
    auto again = f.open();
    CHECK(again->archived_records().size() == 1);
    CHECK(again->adjudication_history().size() == 1);
  }
  SUBCASE("a torn final line is dropped") {
    reopened.reset();
    std::ofstream(f.dir.path() / "events.log", std::ios::binary | std::ios::app) << "{\"sequence\": 99, \"ty";
    auto again = f.open();
    CHECK(again->live_records().size() == 2);
    again->submit_label(rec("ex-02", "alice", 0));
    again.reset();
    CHECK(f.open()->live_records().size() == 3);
  }
  SUBCASE("a corrupt complete line is an error") {
    reopened.reset();
    std::ofstream(f.dir.path() / "events.log", std::ios::binary | std::ios::app) << "not json\n";
    CHECK(kind_of([&] { f.open(); }) == ErrorKind::storage);
  }
  SUBCASE("automatic compaction") {
    reopened.reset();
    f.options.compact_every = 2;
    auto store = f.open();
    store->submit_label(rec("ex-01", "alice", 0));
    store->submit_label(rec("ex-02", "alice", 0));
    CHECK(std::filesystem::exists(f.dir.path() / "snapshot.json"));
    store.reset();
    CHECK(f.open()->live_records().size() == 4);
  }
}

TEST_CASE("concurrent submissions are all persisted") {
  Fixture f(40);
  {
    auto store = f.open();
    std::vector<std::thread> workers;
    for (const char* who : {"alice", "bob"}) {
      workers.emplace_back([&, who] {
        for (const auto& e : f.items) store->submit_label(rec(e.id, who, 0));
      });
    }
    for (auto& w : workers) w.join();
  }
  CHECK(f.open()->live_records().size() == 80);
}

namespace {

struct LiveServer {
  AnnotationServer server;
  int port = 0;
  std::thread thread;

  LiveServer(AnnotationStore& store, ServerOptions options) : server(store, std::move(options)) {
    port = server.bind("127.0.0.1", 0);
    thread = std::thread([this] { server.listen(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }

  httplib::Client client(const std::string& token) const {
    httplib::Client c("127.0.0.1", port);
    if (!token.empty()) c.set_default_headers({{"Authorization", "Bearer " + token}});
    return c;
  }
};

Json body(const httplib::Result& r) { return Json::parse(r->body); }

}  // namespace

TEST_CASE("http endpoints") {
  Fixture f(10);
  auto store = f.open();
  TempDir web("web");
  std::ofstream(web.path() / "index.html") << "<html>annotate</html>";
  ServerOptions options;
  options.tokens = {{"tok-a", "alice"}, {"tok-b", "bob"}};
  options.static_dir = web.path();
  LiveServer live(*store, options);
  auto alice = live.client("tok-a");
  auto bob = live.client("tok-b");

  SUBCASE("authentication") {
    CHECK(live.client("").Get("/api/agreement")->status == 401);
    CHECK(live.client("nope").Get("/api/adjudication")->status == 401);
    CHECK(alice.Get("/api/tasks/next?annotator=bob")->status == 403);
    const auto r = alice.Post("/api/labels", R"({"example_id":"ex-00","annotator_id":"bob","label":0})",
                              "application/json");
    CHECK(r->status == 403);
  }
  SUBCASE("static bundle") {
    const auto r = live.client("").Get("/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>annotate</html>");
  }
  SUBCASE("validation errors") {
    auto r = alice.Post("/api/labels", R"({"example_id":"ex-00","label":1,"justification":""})", "application/json");
    CHECK(r->status == 400);
    CHECK(body(r)["error"].get<std::string>().find("justification") != std::string::npos);
    CHECK(alice.Post("/api/labels", R"({"example_id":"ex-00","label":3})", "application/json")->status == 400);
    CHECK(alice.Post("/api/labels", R"({"example_id":"ex-77","label":0})", "application/json")->status == 404);
    CHECK(alice.Post("/api/labels", "{oops", "application/json")->status == 400);
    CHECK(alice.Get("/api/agreement")->status == 409);
  }
  SUBCASE("two annotators, one disagreement, full gold export") {
    const int labels[] = {0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
    std::string disputed;
    for (auto* c : {&alice, &bob}) {
      const bool is_bob = c == &bob;
      for (;;) {
        auto r = c->Get(std::string("/api/tasks/next?annotator=") + (is_bob ? "bob" : "alice"));
        REQUIRE(r->status == 200);
        const Json task = body(r)["task"];
        if (task.is_null()) break;
        const auto id = task["example"]["id"].get<std::string>();
        CHECK(task["example"]["label"].is_null());
        const int i = std::stoi(id.substr(3));
        int label = labels[i];
        if (is_bob && i == 3) {
          label = 1;
          disputed = id;
        }
        const Json rec_json{{"example_id", id}, {"label", label}, {"justification", label ? "changes meaning" : ""}};
        REQUIRE(c->Post("/api/labels", rec_json.dump(), "application/json")->status == 200);
      }
    }
    auto r = alice.Get("/api/agreement");
    REQUIRE(r->status == 200);
    const Json pair = body(r)["pairs"][0];
    CHECK(pair["n"] == 10);
    CHECK(pair["percent_agreement"].get<double>() == doctest::Approx(0.9));
    // Alice 4/3/3, Bob 3/4/3: p_e = (12 + 12 + 9) / 100.
    CHECK(pair["kappa"].get<double>() == doctest::Approx((0.9 - 0.33) / (1 - 0.33)).epsilon(1e-12));

    r = alice.Get("/api/adjudication");
    const Json queue = body(r)["queue"];
    REQUIRE(queue.size() == 1);
    CHECK(queue[0]["example"]["id"] == disputed);
    CHECK(queue[0]["records"].size() == 2);

    CHECK(body(alice.Get("/api/export/gold"))["count"] == 9);
    const Json resolution{{"example_id", disputed}, {"final_label", 1}, {"note", "pain worsens"}, {"if_unresolved", true}};
    r = bob.Post("/api/adjudication/resolve", resolution.dump(), "application/json");
    REQUIRE(r->status == 200);
    CHECK(body(r)["resolver_ids"] == Json::array({"bob"}));
    CHECK(alice.Post("/api/adjudication/resolve", resolution.dump(), "application/json")->status == 409);
    CHECK(body(alice.Get("/api/adjudication"))["queue"].empty());

    const Json gold = body(alice.Get("/api/export/gold"));
    CHECK(gold["count"] == 10);
    for (const auto& e : gold["examples"]) {
      const int i = std::stoi(e["id"].get<std::string>().substr(3));
      CHECK(e["label"] == (i == 3 ? 1 : labels[i]));
    }
  }
}
