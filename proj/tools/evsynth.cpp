// evsynth command-line front end: ingestion, screening, evaluation, topics,
// questions and the HTTP service over a directory-backed store.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "evsynth/agent.hpp"
#include "evsynth/eval.hpp"
#include "evsynth/indexer.hpp"
#include "evsynth/provider.hpp"
#include "evsynth/screen.hpp"
#include "evsynth/service.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/structq.hpp"
#include "evsynth/topics.hpp"

namespace fs = std::filesystem;
using namespace evsynth;

namespace {

struct ProviderOptions {
    std::string kind = "stub";
    std::size_t dimension = 256;
    std::string criteria;  // stub screening rules come from the criteria file
};

std::unique_ptr<provider::Provider> make_provider(const ProviderOptions& o) {
    if (o.kind == "remote") {
        auto cfg = provider::RemoteConfig::from_env();
        cfg.dimension = o.dimension;
        return std::make_unique<provider::RemoteProvider>(cfg);
    }
    if (o.kind != "stub") throw Error(ErrorCode::InvalidArgument, "provider must be stub or remote");
    provider::StubConfig cfg;
    cfg.dimension = o.dimension;
    if (!o.criteria.empty()) cfg.screening_rules = screen::EligibilityCriteria::load(o.criteria).stub_rules();
    return std::make_unique<provider::StubProvider>(cfg);
}

std::unique_ptr<stores::DataPlane> open_store(const std::string& dir, std::size_t dimension) {
    auto plane = std::make_unique<stores::DataPlane>(dimension);
    if (!dir.empty() && fs::exists(fs::path(dir) / "records.jsonl")) plane->import_jsonl(dir);
    return plane;
}

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<screen::LabeledExample> load_labeled(const std::string& path) {
    std::vector<screen::LabeledExample> out;
    for (const auto& j : screen::read_jsonl(path)) out.push_back(screen::labeled_from_json(j));
    return out;
}

screen::Labels labels_of(const screen::ScreeningResult& r) {
    screen::Labels l{};
    for (const auto d : kAllDimensions) l[static_cast<std::size_t>(d)] = r.scores.at(d).label;
    return l;
}

service::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evsynth: evidence screening, retrieval and synthesis"};
    app.require_subcommand(1);

    ProviderOptions popt;
    app.add_option("--provider", popt.kind, "stub or remote (reads EVSYNTH_PROVIDER_URL)")->capture_default_str();
    app.add_option("--dimension", popt.dimension, "Embedding dimension")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Ingest JSON Lines records into a store directory");
    std::string input;
    std::string store_dir;
    corpus::ChunkPolicy policy;
    ingest->add_option("--input", input, "JSON Lines file")->required()->check(CLI::ExistingFile);
    ingest->add_option("--store", store_dir, "Store directory")->required();
    ingest->add_option("--window", policy.window, "Chunk window in bytes")->capture_default_str();
    ingest->add_option("--overlap", policy.overlap, "Chunk overlap in bytes")->capture_default_str();

    // screen
    auto* screen_cmd = app.add_subcommand("screen", "Train, apply and evaluate the screening model");
    screen_cmd->require_subcommand(1);
    std::string model_path;
    std::string data_path;
    std::string unlabeled_path;
    std::string out_path;
    double tau = screen::kDefaultSelfTrainThreshold;
    std::size_t rounds = 5;
    std::size_t epochs = screen::TrainConfig{}.epochs;
    auto* train_cmd = screen_cmd->add_subcommand("train", "Train from labeled JSON Lines");
    train_cmd->add_option("--data", data_path, "Labeled JSON Lines")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--model", model_path, "Output model file")->required();
    train_cmd->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    auto* predict_cmd = screen_cmd->add_subcommand("predict", "Screen records");
    predict_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--data", data_path, "Records (title, abstract)")->required()->check(CLI::ExistingFile);
    auto* self_cmd = screen_cmd->add_subcommand("selftrain", "Conservative self-training");
    self_cmd->add_option("--model", model_path, "Seed model file")->required()->check(CLI::ExistingFile);
    self_cmd->add_option("--data", data_path, "Gold labeled JSON Lines")->required()->check(CLI::ExistingFile);
    self_cmd->add_option("--unlabeled", unlabeled_path, "Unlabeled pool")->required()->check(CLI::ExistingFile);
    self_cmd->add_option("--out", out_path, "Output model file")->required();
    self_cmd->add_option("--tau", tau, "Confidence gate")->capture_default_str();
    self_cmd->add_option("--rounds", rounds, "Maximum rounds")->capture_default_str();
    auto* seval_cmd = screen_cmd->add_subcommand("eval", "Evaluate a model against gold labels");
    seval_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    seval_cmd->add_option("--data", data_path, "Gold labeled JSON Lines")->required()->check(CLI::ExistingFile);
    auto* criteria_cmd = screen_cmd->add_subcommand("criteria", "Screen records against eligibility criteria");
    std::string criteria_path;
    criteria_cmd->add_option("--criteria", criteria_path, "Criteria JSON")->required()->check(CLI::ExistingFile);
    criteria_cmd->add_option("--data", data_path, "Records (title, abstract)")->required()->check(CLI::ExistingFile);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold files");
    eval_cmd->require_subcommand(1);
    std::string pred_path;
    std::string gold_path;
    bool csv = false;
    auto* eval_screen = eval_cmd->add_subcommand("screening", "Labeled predictions vs gold labels");
    eval_screen->add_option("--pred", pred_path, "Predicted labels")->required()->check(CLI::ExistingFile);
    eval_screen->add_option("--gold", gold_path, "Gold labels")->required()->check(CLI::ExistingFile);
    auto* eval_retr = eval_cmd->add_subcommand("retrieval", "Ranked lists vs relevant sets");
    eval_retr->add_option("--pred", pred_path, "{query_id, ranked}")->required()->check(CLI::ExistingFile);
    eval_retr->add_option("--gold", gold_path, "{query_id, relevant}")->required()->check(CLI::ExistingFile);
    auto* eval_conf = eval_cmd->add_subcommand("confusion", "Metrics from confusion counts");
    eval::ConfusionCounts counts;
    eval_conf->add_option("--tp", counts.tp)->required();
    eval_conf->add_option("--fp", counts.fp)->required();
    eval_conf->add_option("--tn", counts.tn)->required();
    eval_conf->add_option("--fn", counts.fn)->required();
    eval_conf->add_flag("--csv", csv, "CSV output");

    // topics
    auto* topics_cmd = app.add_subcommand("topics", "Cluster stored documents and write assignments");
    topics::FitConfig fit_cfg;
    std::size_t k = 0;
    std::string heatmap_csv;
    topics_cmd->add_option("--store", store_dir, "Store directory")->required()->check(CLI::ExistingDirectory);
    topics_cmd->add_option("--k", k, "Number of topics (0 chooses automatically)");
    topics_cmd->add_option("--seed", fit_cfg.seed)->capture_default_str();
    topics_cmd->add_option("--outlier-percentile", fit_cfg.outlier_percentile)->capture_default_str();
    topics_cmd->add_option("--heatmap", heatmap_csv, "Write topic x year counts as CSV");

    // ask / query
    auto* ask_cmd = app.add_subcommand("ask", "Answer a question from the store");
    std::string question;
    std::size_t max_iterations = 3;
    ask_cmd->add_option("--store", store_dir, "Store directory")->required()->check(CLI::ExistingDirectory);
    ask_cmd->add_option("question", question, "Question")->required();
    ask_cmd->add_option("--max-iterations", max_iterations)->capture_default_str();
    auto* query_cmd = app.add_subcommand("query", "Run a structured aggregate query");
    query_cmd->add_option("--store", store_dir, "Store directory")->required()->check(CLI::ExistingDirectory);
    query_cmd->add_option("question", question, "Natural-language query")->required();

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string api_key;
    serve_cmd->add_option("--store", store_dir, "Store directory to load");
    serve_cmd->add_option("--host", host)->capture_default_str();
    serve_cmd->add_option("--port", port)->capture_default_str();
    serve_cmd->add_option("--model", model_path, "Screening model file")->check(CLI::ExistingFile);
    serve_cmd->add_option("--criteria", criteria_path, "Eligibility criteria JSON")->check(CLI::ExistingFile);
    serve_cmd->add_option("--api-key", api_key, "Static API key (or EVSYNTH_API_KEY)")->envname("EVSYNTH_API_KEY");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            auto provider = make_provider(popt);
            auto plane = open_store(store_dir, provider->dimension());
            Indexer indexer(*plane, *provider, policy);
            const auto report = indexer.ingest_jsonl(input);
            plane->export_jsonl(store_dir);
            print(to_json(report));
            return report.rejected.empty() ? 0 : 2;
        }
        if (*train_cmd) {
            screen::TrainConfig cfg;
            cfg.epochs = epochs;
            const auto model = screen::train(cfg, load_labeled(data_path));
            model.save(model_path);
            print(Json{{"model_id", model.model_id()}, {"final_loss", model.loss_history().back()}});
            return 0;
        }
        if (*predict_cmd) {
            const auto model = screen::MultiHeadModel::load(model_path);
            for (const auto& j : screen::read_jsonl(data_path)) {
                Json out = screen::to_json(model.predict(j.value("title", ""), j.value("abstract", "")));
                if (j.contains("doc_id")) out["doc_id"] = j["doc_id"];
                std::cout << out.dump() << '\n';
            }
            return 0;
        }
        if (*self_cmd) {
            const auto seed = screen::MultiHeadModel::load(model_path);
            std::vector<screen::UnlabeledExample> pool;
            for (const auto& j : screen::read_jsonl(unlabeled_path)) {
                pool.push_back({j.value("title", ""), j.value("abstract", "")});
            }
            const auto report = screen::self_train(seed, load_labeled(data_path), pool, tau, rounds);
            report.model.save(out_path);
            print(Json{{"model_id", report.model.model_id()}, {"pseudo_labels_per_round", report.pseudo_labels_per_round}});
            return 0;
        }
        if (*seval_cmd) {
            const auto model = screen::MultiHeadModel::load(model_path);
            std::vector<screen::Labels> pred;
            std::vector<screen::Labels> gold;
            for (const auto& ex : load_labeled(data_path)) {
                pred.push_back(labels_of(model.predict(ex.title, ex.abstract)));
                gold.push_back(ex.labels);
            }
            print(eval::evaluate_screening(pred, gold).to_json());
            return 0;
        }
        if (*criteria_cmd) {
            popt.criteria = criteria_path;
            auto provider = make_provider(popt);
            const auto criteria = screen::EligibilityCriteria::load(criteria_path);
            for (const auto& j : screen::read_jsonl(data_path)) {
                Json out = screen::to_json(
                    screen::screen_by_criteria(*provider, criteria, j.value("title", ""), j.value("abstract", "")));
                if (j.contains("doc_id")) out["doc_id"] = j["doc_id"];
                std::cout << out.dump() << '\n';
            }
            return 0;
        }
        if (*eval_screen) {
            std::vector<screen::Labels> pred;
            std::vector<screen::Labels> gold;
            for (const auto& ex : load_labeled(pred_path)) pred.push_back(ex.labels);
            for (const auto& ex : load_labeled(gold_path)) gold.push_back(ex.labels);
            print(eval::evaluate_screening(pred, gold).to_json());
            return 0;
        }
        if (*eval_retr) {
            print(eval::evaluate_retrieval(screen::read_jsonl(pred_path), screen::read_jsonl(gold_path)).to_json());
            return 0;
        }
        if (*eval_conf) {
            const auto report = eval::confusion_metrics(counts);
            if (csv) {
                std::cout << eval::to_csv(report);
            } else {
                print(eval::to_json(report));
            }
            return 0;
        }
        if (*topics_cmd) {
            auto provider = make_provider(popt);
            auto plane = open_store(store_dir, provider->dimension());
            if (k > 0) fit_cfg.k = k;
            auto model = topics::fit(topics::document_embeddings(*plane), fit_cfg);
            std::map<std::string, std::string> texts;
            std::map<std::string, std::optional<int>> years;
            for (const auto& doc : plane->metadata().documents()) {
                texts[doc.doc_id] = doc.title + "\n" + doc.abstract.value_or("") + "\n" + doc.full_text.value_or("");
                years[doc.doc_id] = doc.year;
            }
            topics::topic_terms(model, texts);
            topics::persist(model, *plane);
            plane->export_jsonl(store_dir);
            if (!heatmap_csv.empty()) {
                std::ofstream(heatmap_csv) << topics::heatmap(model, years).to_csv();
            }
            print(model.to_json());
            return 0;
        }
        if (*ask_cmd) {
            auto provider = make_provider(popt);
            auto plane = open_store(store_dir, provider->dimension());
            agent::AgentConfig cfg;
            cfg.max_iterations = max_iterations;
            agent::Agent agent(*plane, *provider, cfg);
            const auto session = agent.open_session();
            print(agent.ask(session, question).to_json());
            return 0;
        }
        if (*query_cmd) {
            auto provider = make_provider(popt);
            auto plane = open_store(store_dir, provider->dimension());
            const auto catalog = structq::catalog_for(plane->metadata());
            const auto gen = structq::generate(question, catalog, provider.get());
            if (!gen.ast) {
                print(Json{{"error", "unresolvable"}, {"resolution", gen.report.to_json()}});
                return 3;
            }
            print(Json{{"sql", structq::render_sql(*gen.ast)},
                       {"ast", structq::to_json(*gen.ast)},
                       {"result", structq::execute(*gen.ast, plane->metadata(), std::nullopt, catalog).to_json()}});
            return 0;
        }
        if (*serve_cmd) {
            popt.criteria = criteria_path;
            auto provider = make_provider(popt);
            auto plane = open_store(store_dir, provider->dimension());
            service::ServiceConfig cfg;
            cfg.api_key = api_key;
            service::Service svc(*plane, *provider, cfg);
            if (!model_path.empty()) svc.set_screening_model(screen::MultiHeadModel::load(model_path));
            if (!criteria_path.empty()) svc.set_criteria(screen::EligibilityCriteria::load(criteria_path));
            const int bound = svc.bind(host, port);
            std::cerr << "listening on " << host << ':' << bound << '\n';
            g_service = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            svc.serve();
            g_service = nullptr;
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
