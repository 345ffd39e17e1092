#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "evsynth/service.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"

using namespace evsynth;
using namespace evsynth::service;

namespace {

Request req(std::string method, std::string path, std::string body = {}) {
    Request r;
    r.method = std::move(method);
    r.path = std::move(path);
    r.body = std::move(body);
    return r;
}

Request get(std::string path, std::multimap<std::string, std::string> query = {}) {
    Request r = req("GET", std::move(path));
    r.query = std::move(query);
    return r;
}

std::string jsonl(const std::vector<Json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

stores::AnnotationSet labels_with_confidence(const screen::Labels& labels, double conf) {
    stores::AnnotationSet a;
    for (const auto d : kAllDimensions) a.picos[d] = {labels[static_cast<std::size_t>(d)], conf};
    a.sync_study_design();
    a.include_decision = screen::aggregate_qualification(labels);
    return a;
}

struct Fixture {
    stores::DataPlane plane;
    provider::StubProvider stub;
    Service svc{plane, stub};
};

}  // namespace

TEST(Service, HealthReportsEpochAndOutage) {
    Fixture f;
    EXPECT_EQ(f.svc.health()["epoch"], 0);
    EXPECT_EQ(f.svc.health()["status"], "ok");
    const auto r = f.svc.handle(req("POST", "/ingest", jsonl({fixtures::raw_record("A title", "Abstract.", 2020)})));
    ASSERT_EQ(r.status, 200) << r.payload();
    EXPECT_EQ(r.body["ingest"]["new_count"], 1);
    EXPECT_EQ(f.svc.handle(get("/health")).body["epoch"], 1);
    f.stub.set_available(false);
    const auto h = f.svc.health();
    EXPECT_EQ(h["status"], "degraded");
    EXPECT_EQ(h["provider"]["reachable"], false);
}

TEST(Service, IngestValidation) {
    Fixture f;
    EXPECT_EQ(f.svc.handle(req("POST", "/ingest", "")).status, 422);
    EXPECT_EQ(f.svc.handle(req("POST", "/ingest", "{not json")).status, 422);
    const auto untitled = f.svc.handle(req("POST", "/ingest", jsonl({Json{{"abstract", "x"}}})));
    EXPECT_EQ(untitled.status, 422);
    EXPECT_EQ(untitled.body["rejected"].size(), 1u);
}

TEST(Service, RoutingErrors) {
    Fixture f;
    EXPECT_EQ(f.svc.handle(get("/nowhere")).status, 404);
    EXPECT_EQ(f.svc.handle(req("DELETE", "/health")).status, 405);
    EXPECT_EQ(f.svc.handle(get("/chunks/missing")).status, 404);
    EXPECT_EQ(f.svc.handle(get("/sessions/missing")).status, 404);
    EXPECT_EQ(f.svc.handle(get("/dashboard/topics/heatmap")).status, 409);
    EXPECT_EQ(f.svc.handle(req("POST", "/screen/batch", R"({"all":true})")).status, 422);
    EXPECT_TRUE(f.svc.openapi()["paths"].contains("/sessions/{id}/messages"));
}

TEST(Service, ApiKey) {
    stores::DataPlane plane;
    provider::StubProvider stub;
    ServiceConfig cfg;
    cfg.api_key = "secret";
    Service svc(plane, stub, cfg);
    EXPECT_EQ(svc.handle(get("/health")).status, 401);
    auto r = get("/health");
    r.headers["authorization"] = "Bearer secret";
    EXPECT_EQ(svc.handle(r).status, 200);
    r.headers = {{"x-api-key", "wrong"}};
    EXPECT_EQ(svc.handle(r).status, 401);
}

TEST(Service, QueueOrdersUncertainFirst) {
    Fixture f;
    std::vector<Json> raw;
    for (int i = 0; i < 4; ++i) raw.push_back(fixtures::raw_record("Queue doc " + std::to_string(i), "Text.", 2020));
    ASSERT_EQ(f.svc.handle(req("POST", "/ingest", jsonl(raw))).status, 200);
    using L = TernaryLabel;
    const auto docs = f.plane.metadata().documents();
    const std::vector<double> confs{0.7, 0.6, 0.9, 0.99};
    for (std::size_t i = 0; i < docs.size(); ++i) {
        screen::Labels l{L::Yes, L::Yes, L::Yes, L::Yes, L::Yes};
        if (i < 3) l[static_cast<std::size_t>(i)] = L::Maybe;
        f.plane.upsert_annotations(docs[i].doc_id, labels_with_confidence(l, confs[i]), "test");
    }
    const auto q = f.svc.handle(get("/screening/queue", {{"label", "maybe"}}));
    ASSERT_EQ(q.status, 200);
    ASSERT_EQ(q.body["count"], 3);
    double prev = 0.0;
    for (const auto& item : q.body["items"]) {
        EXPECT_EQ(item["dimensions"].size(), 5u);
        EXPECT_GE(item["min_confidence"].get<double>(), prev);
        prev = item["min_confidence"].get<double>();
    }
    EXPECT_EQ(q.body["items"][0]["doc_id"], docs[1].doc_id);
    EXPECT_EQ(f.svc.handle(get("/screening/queue", {{"label", "any"}})).body["count"], 4);
    EXPECT_EQ(f.svc.handle(get("/screening/queue", {{"label", "maybe"}, {"dimension", "P"}})).body["count"], 1);
    EXPECT_EQ(f.svc.handle(get("/screening/queue", {{"label", "perhaps"}})).status, 422);
}

TEST(Service, ComplianceDashboard) {
    Fixture f;
    fixtures::load_compliance_fixture(f.plane, f.stub);
    const auto c = f.svc.handle(get("/dashboard/compliance"));
    ASSERT_EQ(c.status, 200);
    EXPECT_EQ(c.body["dimensions"]["P"]["numerator"], 7);
    EXPECT_EQ(c.body["dimensions"]["P"]["denominator"], 25);
    EXPECT_DOUBLE_EQ(c.body["dimensions"]["P"]["ratio"].get<double>(), 0.28);
    EXPECT_EQ(c.body["joint"]["numerator"], 1);
    const auto t = f.svc.handle(get("/dashboard/compliance/trend", {{"dimension", "P"}}));
    EXPECT_EQ(t.body["years"].size(), 5u);
}

TEST(Service, OverrideHistoryAndExport) {
    Fixture f;
    const auto ids = fixtures::load_compliance_fixture(f.plane, f.stub);
    const std::string path = "/screening/" + ids[3] + "/override";
    EXPECT_EQ(f.svc.handle(req("POST", path, R"({"dimension":"P","label":"no","reviewer":"ana"})")).status, 200);
    const auto second = f.svc.handle(req("POST", path, R"({"dimension":"P","label":"maybe","reviewer":"ana"})"));
    ASSERT_EQ(second.status, 200);
    const auto hist = f.svc.handle(get("/screening/" + ids[3] + "/history")).body["history"];
    // The fixture load wrote one entry, then two overrides.
    ASSERT_EQ(hist.size(), 3u);
    EXPECT_EQ(hist.back()["after"]["picos"]["P"]["label"], "maybe");
    EXPECT_EQ(f.plane.metadata().annotations(ids[3])->picos.at(Dimension::P).label, TernaryLabel::Maybe);
    EXPECT_EQ(f.svc.handle(req("POST", path, R"({"dimension":"Q","label":"no","reviewer":"ana"})")).status, 422);
    EXPECT_EQ(f.svc.handle(req("POST", "/screening/nope/override", R"({"dimension":"P","label":"no","reviewer":"a"})"))
                  .status,
              404);

    f.svc.triage_update(ids[4], Dimension::O, TernaryLabel::No, "ben");
    const auto rows = f.svc.export_overrides();
    ASSERT_EQ(rows.size(), 2u);
    std::vector<screen::LabeledExample> examples;
    for (const auto& row : rows) examples.push_back(screen::labeled_from_json(row));
    screen::TrainConfig cfg;
    cfg.epochs = 5;
    EXPECT_TRUE(screen::train(cfg, examples).trained());
    const auto exported = f.svc.handle(get("/screening/overrides/export"));
    EXPECT_EQ(exported.status, 200);
}

TEST(Service, AuditReplayRebuildsDashboards) {
    Fixture f;
    std::vector<Json> raw;
    for (int i = 0; i < 6; ++i) {
        raw.push_back(fixtures::raw_record("Replay doc " + std::to_string(i), "Walking programme.", 2018 + i % 3));
    }
    ASSERT_EQ(f.svc.handle(req("POST", "/ingest", jsonl(raw))).status, 200);
    const auto id = f.plane.metadata().documents()[0].doc_id;
    for (const auto d : kAllDimensions) {
        f.svc.handle(req("POST", "/screening/" + id + "/override",
                         Json{{"dimension", to_string(d)}, {"label", "yes"}, {"reviewer", "r"}}.dump()));
    }
    ASSERT_EQ(f.svc.handle(req("POST", "/topics/fit", R"({"k":2})")).status, 200);
    const auto audit = f.svc.audit();
    EXPECT_EQ(audit.size(), 7u);

    Fixture g;
    g.svc.replay(audit);
    EXPECT_EQ(g.svc.handle(get("/dashboard/compliance")).body["dimensions"],
              f.svc.handle(get("/dashboard/compliance")).body["dimensions"]);
    EXPECT_EQ(g.svc.handle(get("/dashboard/topics/heatmap", {{"format", "csv"}})).payload(),
              f.svc.handle(get("/dashboard/topics/heatmap", {{"format", "csv"}})).payload());
}

TEST(Service, HeatmapCsv) {
    Fixture f;
    fixtures::load_medical_corpus(f.plane, f.stub);
    ASSERT_EQ(f.svc.handle(req("POST", "/topics/fit", R"({"k":2,"outlier_percentile":100})")).status, 200);
    const auto csv = f.svc.handle(get("/dashboard/topics/heatmap", {{"format", "csv"}}));
    ASSERT_EQ(csv.content_type, "text/csv");
    EXPECT_EQ(csv.payload().rfind("topic,year,count\n", 0), 0u);
    const auto json = f.svc.handle(get("/dashboard/topics/heatmap")).body;
    // 2 topics over 2012..2023.
    EXPECT_EQ(json["years"].size(), 12u);
    EXPECT_EQ(f.svc.handle(get("/topics")).body["topics"].size(), 2u);
}

TEST(Service, StructuredQueryEndpoint) {
    Fixture f;
    fixtures::load_year_fixture(f.plane, f.stub);
    const auto r = f.svc.handle(req("POST", "/query/structured", R"({"query":"Count abstracts containing 'stroke'"})"));
    ASSERT_EQ(r.status, 200) << r.payload();
    EXPECT_EQ(r.body["result"]["rows"][0][0], 1);
    const auto bad = f.svc.handle(req("POST", "/query/structured", R"({"query":"List the zorps"})"));
    EXPECT_EQ(bad.status, 422);
    EXPECT_TRUE(bad.body["error"].contains("details"));
}

TEST(Service, SessionCitationsResolveToChunks) {
    Fixture f;
    fixtures::load_medical_corpus(f.plane, f.stub);
    const auto open = f.svc.handle(req("POST", "/sessions"));
    ASSERT_EQ(open.status, 201);
    const std::string sid = open.body["session_id"];
    const auto msg =
        f.svc.handle(req("POST", "/sessions/" + sid + "/messages", R"({"query":"effects of tai chi on balance"})"));
    ASSERT_EQ(msg.status, 200) << msg.payload();
    EXPECT_EQ(msg.body["kind"], "grounded");
    const auto session = f.svc.handle(get("/sessions/" + sid)).body;
    ASSERT_EQ(session["messages"].size(), 1u);
    const auto& citations = session["messages"][0]["citations"];
    ASSERT_FALSE(citations.empty());
    for (const auto& c : citations) {
        const auto ev = f.svc.handle(get("/sessions/" + sid + "/evidence/" + c.get<std::string>()));
        ASSERT_EQ(ev.status, 200);
        const auto chunk = f.svc.handle(get("/chunks/" + c.get<std::string>()));
        ASSERT_EQ(chunk.status, 200);
        EXPECT_EQ(ev.body["chunk_text"], chunk.body["text"]);
    }
    const auto audit = f.svc.handle(get("/sessions/" + sid + "/audit"));
    EXPECT_EQ(audit.content_type, "application/x-ndjson");
    EXPECT_FALSE(audit.payload().empty());
    EXPECT_EQ(f.svc.handle(req("POST", "/sessions/" + sid + "/messages", "{}")).status, 422);
}

TEST(Service, OverHttp) {
    Fixture f;
    const int port = f.svc.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread server([&] { f.svc.serve(); });
    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    httplib::Result res;
    for (int attempt = 0; attempt < 50 && !res; ++attempt) {
        res = client.Get("/health");
        if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(Json::parse(res->body)["status"], "ok");
    const auto ingest = client.Post("/ingest", jsonl({fixtures::raw_record("Over the wire", "Text.", 2022)}),
                                    "application/x-ndjson");
    ASSERT_TRUE(ingest);
    EXPECT_EQ(ingest->status, 200);
    const auto missing = client.Get("/chunks/none");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);
    f.svc.stop();
    server.join();
}
