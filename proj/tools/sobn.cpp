// sobn: learn and query second-order Bayesian networks from incomplete data.
//
// Subcommands:
//   compile     build the arithmetic circuit for a network and dump it
//   sample      draw a ground-truth net and a (masked) dataset
//   learn       fit a parameter posterior (bmm, em-ga, em-fisher)
//   query       second-order conditional queries against a saved posterior
//   experiment  the DeCBoD calibration experiments (a | b)
//
// Exit codes: 0 success, 2 argument error, 3 input-format error,
// 4 numerical failure.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "sobn/harness.hpp"
#include "sobn/io.hpp"

namespace {

using namespace sobn;

BayesNet resolve_structure(const std::string& structure_id, const std::string& network_file) {
    if (!network_file.empty()) return load_network(network_file);
    if (!structure_id.empty()) return make_structure(structure_id);
    throw ArgumentError("provide --structure or --network");
}

std::vector<int> parse_order(const std::string& text, const BayesNet& net) {
    std::vector<int> order;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) order.push_back(net.node_by_name(tok));
    return order;
}

LearnerId parse_learner(const std::string& id) {
    if (id == "bmm") return LearnerId::Bmm;
    if (id == "em-ga") return LearnerId::EmGa;
    if (id == "em-fisher") return LearnerId::EmFisher;
    throw ArgumentError("unknown learner id: " + id);
}

int cmd_compile(const std::string& structure_id, const std::string& network_file,
                const std::string& order_text, const std::string& out_file) {
    BayesNet net = resolve_structure(structure_id, network_file);
    std::vector<int> order;
    if (order_text.empty()) {
        order = net.order();
        std::reverse(order.begin(), order.end());
    } else {
        order = parse_order(order_text, net);
    }
    Spn spn = Spn::compile(net, order);
    auto c = spn.counts();
    std::cout << "nodes " << spn.size() << " sum " << c.sums << " product " << c.products
              << " indicator " << c.indicators << " param " << c.params << "\n";

    // probe value so differently-ordered compilations can be cross-checked
    Spn::EvalBuffer buf;
    Observation probe(net.num_nodes());
    probe[0] = 0;
    std::cout << "probe p(" << net.names[0] << "=0) = " << std::setprecision(17)
              << spn.forward(net, probe, buf) << "\n";

    if (!out_file.empty()) {
        std::ofstream out(out_file);
        if (!out) throw StructureError("cannot write " + out_file);
        spn.dump(out);
    }
    return 0;
}

int cmd_sample(const std::string& structure_id, const std::string& network_file, int rows,
               double retention, std::uint64_t seed, const std::string& out_net,
               const std::string& out_data) {
    BayesNet structure = resolve_structure(structure_id, network_file);
    Rng net_rng = Rng::substream(seed, 0, 0);
    Rng data_rng = Rng::substream(seed, 0, 1);
    Rng mask_rng = Rng::substream(seed, 0, 2);
    BayesNet truth = network_file.empty() ? sample_ground_truth(structure, net_rng) : structure;
    Dataset data = ancestral_sample(truth, rows, data_rng);
    if (retention < 1.0) data = mask_cells(data, retention, mask_rng);
    if (!out_net.empty()) save_network(truth, out_net);
    if (!out_data.empty()) save_dataset(data, truth, out_data);
    std::cout << "sampled " << rows << " rows (retention " << retention << ")\n";
    return 0;
}

int cmd_learn(const std::string& network_file, const std::string& data_file,
              const std::string& learner_id, int fisher_weighting, const std::string& out_file) {
    BayesNet net = load_network(network_file);
    Dataset data = load_dataset(data_file, net);
    Spn spn = Spn::compile(net);
    LearnerId learner = parse_learner(learner_id);

    auto t0 = std::chrono::steady_clock::now();
    nlohmann::json out_json;
    if (learner == LearnerId::Bmm) {
        BmmState state = bmm_fit(net, spn, data);
        out_json = dirichlet_to_json(state.posterior);
        std::cout << "rows " << data.rows.size() << " skipped " << state.skipped_rows << "\n";
    } else {
        EmConfig cfg;
        cfg.fisher_weighting = fisher_weighting;
        auto [theta, trace] = em_fit(net, spn, data, cfg);
        InfoMatrix info = learner == LearnerId::EmGa
                              ? build_hessian_ga(spn, net, theta, data, cfg)
                              : build_fisher(spn, net, theta, observation_patterns(data), cfg);
        GaussianPosterior g;
        g.mean = Eigen::Map<Eigen::VectorXd>(theta.data(), theta.size());
        g.cov = covariance_from_info(info, build_D(net));
        out_json = gaussian_to_json(g);
        std::cout << "em iterations " << trace.iterations
                  << (trace.converged ? " (converged)" : " (cap reached)") << " log-posterior "
                  << (trace.log_posterior.empty() ? 0.0 : trace.log_posterior.back())
                  << " skipped " << trace.skipped_rows << "\n";
    }
    auto t1 = std::chrono::steady_clock::now();
    std::cout << "learn time " << std::chrono::duration<double>(t1 - t0).count() << " s\n";

    std::ofstream out(out_file);
    if (!out) throw StructureError("cannot write " + out_file);
    out << out_json.dump(2) << "\n";
    return 0;
}

int cmd_query(const std::string& network_file, const std::string& posterior_file,
              const std::string& evidence_text) {
    BayesNet net = load_network(network_file);
    GaussianPosterior posterior = load_posterior(posterior_file, net);
    Observation evidence = parse_evidence(evidence_text, net);
    Spn spn = Spn::compile(net);
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : query_all(spn, net, posterior, evidence))
        for (std::size_t v = 0; v < r.mean.size(); ++v)
            records.push_back({{"node", net.names[r.node]},
                               {"value", v},
                               {"mean", r.mean[v]},
                               {"variance", r.variance[v]}});
    std::cout << records.dump(2) << "\n";
    return 0;
}

int cmd_experiment(const std::string& which, const std::string& structure_id,
                   const std::string& network_file, int n, int rows, std::uint64_t seed,
                   const std::string& out_dir, int jobs, const std::vector<double>& fractions,
                   const std::string& learners_text) {
    BayesNet structure = resolve_structure(structure_id, network_file);
    std::vector<LearnerId> learners;
    {
        std::stringstream ss(learners_text);
        std::string tok;
        while (std::getline(ss, tok, ',')) learners.push_back(parse_learner(tok));
    }
    std::filesystem::create_directories(out_dir);

    std::ostringstream cfg;
    cfg << which << " " << structure_id << network_file << " n=" << n << " t=" << rows
        << " learners=" << learners_text;
    for (double f : fractions) cfg << " f=" << f;

    std::vector<ExperimentRow> table;
    if (which == "a") {
        table = experiment_a(structure, fractions, learners, n, rows, seed, jobs);
    } else if (which == "b") {
        int complete = std::min(20, rows);
        table = experiment_b(structure, learners, n, complete, rows - complete, seed, jobs);
    } else {
        throw ArgumentError("experiment must be 'a' or 'b'");
    }
    auto dir = std::filesystem::path(out_dir);
    write_decbod_csv(table, (dir / "decbod.csv").string(), seed, cfg.str());
    write_summary_csv(table, (dir / "summary.csv").string(), seed, cfg.str());
    for (const auto& row : table)
        std::cout << row.learner << " " << row.cell << " mean_abs=" << row.curve.mean_abs
                  << " mean_time_s=" << row.mean_time << " failures=" << row.failures << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"second-order Bayesian network learning and calibration"};
    app.require_subcommand(1);

    std::string structure_id, network_file, order_text, out_file, data_file;
    std::string learner_id = "bmm", evidence_text, posterior_file, out_dir = ".";
    std::string which, learners_text = "bmm,em-ga,em-fisher";
    int rows = 120, n = 200, fisher_weighting = 1;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    double retention = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    auto* compile = app.add_subcommand("compile", "compile a network into a circuit");
    compile->add_option("--structure", structure_id, "built-in structure (chain3, dag9)");
    compile->add_option("--network", network_file, "network JSON file");
    compile->add_option("--order", order_text, "comma-separated elimination order");
    compile->add_option("--out", out_file, "circuit dump file");

    auto* sample = app.add_subcommand("sample", "draw a ground-truth net and dataset");
    sample->add_option("--structure", structure_id, "built-in structure");
    sample->add_option("--network", network_file, "network JSON file (used as-is)");
    sample->add_option("--t", rows, "number of rows");
    sample->add_option("--f", retention, "cell retention fraction");
    sample->add_option("--seed", seed, "master seed");
    std::string out_net, out_data;
    sample->add_option("--out-net", out_net, "write the sampled network here");
    sample->add_option("--out-data", out_data, "write the dataset here");

    auto* learn = app.add_subcommand("learn", "fit a parameter posterior");
    learn->add_option("--network", network_file, "network JSON file")->required();
    learn->add_option("--data", data_file, "dataset CSV")->required();
    learn->add_option("--learner", learner_id, "bmm | em-ga | em-fisher");
    learn->add_option("--fisher-weighting", fisher_weighting, "1 (default) or 2");
    learn->add_option("--out", out_file, "posterior JSON output")->required();

    auto* query = app.add_subcommand("query", "second-order conditional queries");
    query->add_option("--network", network_file, "network JSON file")->required();
    query->add_option("--posterior", posterior_file, "posterior JSON file")->required();
    query->add_option("--evidence", evidence_text, "e.g. \"X0=1,X2=0\"");

    auto* experiment = app.add_subcommand("experiment", "DeCBoD calibration experiments");
    experiment->add_option("which", which, "a or b")->required();
    experiment->add_option("--structure", structure_id, "built-in structure");
    experiment->add_option("--network", network_file, "network JSON file");
    experiment->add_option("--n", n, "trials per cell");
    experiment->add_option("--t", rows, "rows per trial");
    experiment->add_option("--seed", seed, "master seed");
    experiment->add_option("--out", out_dir, "output directory");
    experiment->add_option("--jobs", jobs, "worker threads");
    experiment->add_option("--fractions", fractions, "retention fractions (experiment a)");
    experiment->add_option("--learners", learners_text, "comma-separated learner ids");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (compile->parsed())
            return cmd_compile(structure_id, network_file, order_text, out_file);
        if (sample->parsed())
            return cmd_sample(structure_id, network_file, rows, retention, seed, out_net,
                              out_data);
        if (learn->parsed())
            return cmd_learn(network_file, data_file, learner_id, fisher_weighting, out_file);
        if (query->parsed()) return cmd_query(network_file, posterior_file, evidence_text);
        if (experiment->parsed())
            return cmd_experiment(which, structure_id, network_file, n, rows, seed, out_dir,
                                  std::max(jobs, 1), fractions, learners_text);
    } catch (const sobn::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const sobn::StructureError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const sobn::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
