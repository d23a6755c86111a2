#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "sobn/bayes_net.hpp"
#include "sobn/bmm.hpp"
#include "sobn/em.hpp"
#include "sobn/errors.hpp"
#include "sobn/infer2.hpp"
#include "sobn/posterior.hpp"
#include "sobn/spn.hpp"

namespace sobn {

constexpr int kDecbodGridSize = 101; // gamma = 0, 0.01, ..., 1

inline double decbod_gamma(int g) { return g / 100.0; }

enum class LearnerId { Bmm, EmGa, EmFisher };

inline std::string learner_name(LearnerId id) {
    switch (id) {
        case LearnerId::Bmm: return "bmm";
        case LearnerId::EmGa: return "em-ga";
        case LearnerId::EmFisher: return "em-fisher";
    }
    return "?";
}

/// Empirical coverage curve over the 101-point gamma grid plus its mean
/// absolute divergence from the diagonal.
struct DecbodCurve {
    std::array<double, kDecbodGridSize> r{};
    double mean_abs = 0.0;
    long count = 0;
};

/// Per-gamma containment counts from one or more trials; the reduction is
/// integer addition, so parallel aggregation is exactly order-independent.
struct CoverageCounts {
    std::array<long, kDecbodGridSize> contained{};
    long total = 0;

    void add(const CoverageCounts& other) {
        for (int g = 0; g < kDecbodGridSize; ++g) contained[g] += other.contained[g];
        total += other.total;
    }
};

inline DecbodCurve decbod(const CoverageCounts& counts) {
    if (counts.total == 0) throw ArgumentError("decbod: no coverage records");
    DecbodCurve curve;
    curve.count = counts.total;
    double acc = 0.0;
    for (int g = 0; g < kDecbodGridSize; ++g) {
        curve.r[g] = static_cast<double>(counts.contained[g]) / counts.total;
        acc += std::abs(curve.r[g] - decbod_gamma(g));
    }
    curve.mean_abs = acc / kDecbodGridSize;
    return curve;
}

/// Masking applied per trial: either i.i.d. cell retention at rate f, or a
/// block of complete seed rows followed by pattern rows observing only the
/// nodes in `keep`.
struct MaskSpec {
    bool pattern_mode = false;
    double retention = 1.0;        // cell mode
    int complete_rows = 0;         // pattern mode: leading complete rows
    std::vector<int> keep;         // pattern mode: observed node set
};

struct TrialConfig {
    BayesNet structure;
    int rows = 120;                // T
    MaskSpec mask;
    LearnerId learner = LearnerId::Bmm;
    double evidence_reveal = 0.3;  // per-variable reveal probability
    std::uint64_t master_seed = 0;
    EmConfig em;
    IntervalMethod interval = IntervalMethod::BetaMatched;
};

struct TrialResult {
    CoverageCounts counts;
    double learn_seconds = 0.0;
    int skipped_rows = 0;
    bool failed = false;
};

namespace detail {

// substream purpose tags
enum : std::uint64_t { kStreamNet = 0, kStreamData = 1, kStreamMask = 2, kStreamEvidence = 3,
                       kStreamLearner = 4 };

inline GaussianPosterior learn_posterior(const TrialConfig& cfg, const Spn& spn,
                                         const BayesNet& structure, const Dataset& data,
                                         std::uint64_t trial, int& skipped) {
    if (cfg.learner == LearnerId::Bmm) {
        BmmState state = bmm_fit(structure, spn, data);
        skipped = state.skipped_rows;
        return to_gaussian(state.posterior);
    }
    EmConfig em = cfg.em;
    std::uint64_t s = cfg.master_seed ^ (trial * 0x9e3779b97f4a7c15ULL) ^ kStreamLearner;
    em.init_seed = splitmix64(s);
    auto [theta_hat, trace] = em_fit(structure, spn, data, em);
    skipped = trace.skipped_rows;
    FreeTransform ft = build_D(structure);
    InfoMatrix info = cfg.learner == LearnerId::EmGa
                          ? build_hessian_ga(spn, structure, theta_hat, data, em)
                          : build_fisher(spn, structure, theta_hat, observation_patterns(data), em);
    GaussianPosterior g;
    g.mean = Eigen::Map<const Eigen::VectorXd>(theta_hat.data(), theta_hat.size());
    g.cov = covariance_from_info(info, ft);
    return g;
}

} // namespace detail

/// One full DeCBoD trial: sample a ground-truth net, draw and mask a
/// dataset, learn a posterior, draw evidence from a fresh assignment, and
/// record interval containment of the exact truth on the gamma grid.
inline TrialResult run_trial(const TrialConfig& cfg, const Spn& spn, std::uint64_t trial) {
    TrialResult result;
    Rng net_rng = Rng::substream(cfg.master_seed, trial, detail::kStreamNet);
    Rng data_rng = Rng::substream(cfg.master_seed, trial, detail::kStreamData);
    Rng mask_rng = Rng::substream(cfg.master_seed, trial, detail::kStreamMask);
    Rng ev_rng = Rng::substream(cfg.master_seed, trial, detail::kStreamEvidence);

    BayesNet truth = sample_ground_truth(cfg.structure, net_rng);
    Dataset data = ancestral_sample(truth, cfg.rows, data_rng);
    if (cfg.mask.pattern_mode) {
        Dataset head, tail;
        for (std::size_t t = 0; t < data.rows.size(); ++t)
            (static_cast<int>(t) < cfg.mask.complete_rows ? head : tail)
                .rows.push_back(data.rows[t]);
        tail = mask_pattern(tail, cfg.mask.keep, truth.num_nodes());
        data = std::move(head);
        for (auto& row : tail.rows) data.rows.push_back(std::move(row));
    } else {
        data = mask_cells(data, cfg.mask.retention, mask_rng);
    }

    GaussianPosterior posterior;
    int skipped = 0;
    auto t0 = std::chrono::steady_clock::now();
    try {
        posterior = detail::learn_posterior(cfg, spn, cfg.structure, data, trial, skipped);
    } catch (const NumericError&) {
        result.failed = true;
        return result;
    }
    auto t1 = std::chrono::steady_clock::now();
    result.learn_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.skipped_rows = skipped;

    // evidence: one fresh assignment, each variable revealed independently,
    // at least one variable kept hidden so there is something to query
    auto order = truth.order();
    std::vector<int> assignment = draw_assignment(truth, order, ev_rng);
    Observation evidence(truth.num_nodes());
    for (int i = 0; i < truth.num_nodes(); ++i)
        if (ev_rng.bernoulli(cfg.evidence_reveal)) evidence[i] = assignment[i];
    {
        bool all = true;
        for (const auto& c : evidence)
            if (!c.has_value()) { all = false; break; }
        if (all) evidence[ev_rng.uniform_int(truth.num_nodes())].reset();
    }

    // exact ground-truth conditionals via the circuit at the true parameters
    Spn::EvalBuffer buf;
    double pe_true = spn.forward(truth, evidence, buf);
    if (pe_true <= 0.0) {
        result.failed = true;
        return result;
    }
    PassResult pass_true = spn.backward(truth, evidence, buf);

    std::vector<QueryResult> answers;
    try {
        answers = query_all(spn, cfg.structure, posterior, evidence);
    } catch (const NumericError&) {
        result.failed = true;
        return result;
    }

    for (const auto& ans : answers) {
        auto joint = joint_from_derivatives(pass_true, truth, ans.node, evidence);
        for (int v = 0; v < truth.card[ans.node]; ++v) {
            double truth_p = joint[v] / pe_true;
            double var = std::max(ans.variance[v], 1e-18);
            for (int g = 0; g < kDecbodGridSize; ++g) {
                auto [lo, hi] = beta_interval(ans.mean[v], var, decbod_gamma(g), cfg.interval);
                if (truth_p >= lo && truth_p <= hi) ++result.counts.contained[g];
            }
            ++result.counts.total;
        }
    }
    return result;
}

/// N independent trials on a work pool; the aggregate is bit-identical to
/// the serial run because per-trial streams are seed-derived and counts are
/// reduced by index-independent integer addition.
struct BatchResult {
    CoverageCounts counts;
    std::vector<double> times;  // successful trials, trial order
    int failures = 0;
    int skipped_rows = 0;

    double mean_time() const {
        if (times.empty()) return 0.0;
        double s = 0.0;
        for (double t : times) s += t;
        return s / times.size();
    }
};

inline BatchResult run_trials(const TrialConfig& cfg, int num_trials, int jobs = 1) {
    Spn spn = Spn::compile(cfg.structure);
    std::vector<TrialResult> results(num_trials);
    if (jobs <= 1) {
        for (int t = 0; t < num_trials; ++t) results[t] = run_trial(cfg, spn, t);
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                int t = next.fetch_add(1);
                if (t >= num_trials) return;
                results[t] = run_trial(cfg, spn, t);
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    BatchResult out;
    for (const auto& r : results) {
        if (r.failed) { ++out.failures; continue; }
        out.counts.add(r.counts);
        out.times.push_back(r.learn_seconds);
        out.skipped_rows += r.skipped_rows;
    }
    return out;
}

// ------------------------------------------------------------- experiments

struct ExperimentRow {
    std::string learner;
    std::string cell;
    DecbodCurve curve;
    double mean_time = 0.0;
    int failures = 0;
};

/// Experiment A: cell-level masking at each retention fraction.
inline std::vector<ExperimentRow> experiment_a(const BayesNet& structure,
                                               const std::vector<double>& fractions,
                                               const std::vector<LearnerId>& learners, int n,
                                               int rows, std::uint64_t seed, int jobs = 1) {
    std::vector<ExperimentRow> table;
    for (LearnerId learner : learners) {
        for (double f : fractions) {
            TrialConfig cfg;
            cfg.structure = structure;
            cfg.rows = rows;
            cfg.mask.retention = f;
            cfg.learner = learner;
            cfg.master_seed = seed;
            BatchResult batch = run_trials(cfg, n, jobs);
            ExperimentRow row;
            row.learner = learner_name(learner);
            char buf[32];
            std::snprintf(buf, sizeof buf, "f=%.2f", f);
            row.cell = buf;
            row.curve = decbod(batch.counts);
            row.mean_time = batch.mean_time();
            row.failures = batch.failures;
            table.push_back(std::move(row));
        }
    }
    return table;
}

/// Experiment B: complete seed rows, then rows observing only the leaves.
inline std::vector<ExperimentRow> experiment_b(const BayesNet& structure,
                                               const std::vector<LearnerId>& learners, int n,
                                               int complete_rows, int pattern_rows,
                                               std::uint64_t seed, int jobs = 1) {
    auto leaves = structure.leaves();
    if (leaves.empty()) throw ArgumentError("experiment b: structure has no leaf nodes");
    std::vector<ExperimentRow> table;
    for (LearnerId learner : learners) {
        TrialConfig cfg;
        cfg.structure = structure;
        cfg.rows = complete_rows + pattern_rows;
        cfg.mask.pattern_mode = true;
        cfg.mask.complete_rows = complete_rows;
        cfg.mask.keep = leaves;
        cfg.learner = learner;
        cfg.master_seed = seed;
        BatchResult batch = run_trials(cfg, n, jobs);
        ExperimentRow row;
        row.learner = learner_name(learner);
        row.cell = "leaf-only";
        row.curve = decbod(batch.counts);
        row.mean_time = batch.mean_time();
        row.failures = batch.failures;
        table.push_back(std::move(row));
    }
    return table;
}

// ------------------------------------------------------------- CSV output

inline std::uint64_t config_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline void write_decbod_csv(const std::vector<ExperimentRow>& table, const std::string& path,
                             std::uint64_t seed, const std::string& config_text) {
    std::ofstream out(path);
    if (!out) throw StructureError("cannot write " + path);
    out << "# seed=" << seed << " config=" << std::hex << config_hash(config_text) << std::dec
        << "\n";
    out << "learner,cell,gamma,r\n";
    char buf[64];
    for (const auto& row : table) {
        for (int g = 0; g < kDecbodGridSize; ++g) {
            std::snprintf(buf, sizeof buf, "%.2f,%.6f", decbod_gamma(g), row.curve.r[g]);
            out << row.learner << "," << row.cell << "," << buf << "\n";
        }
    }
}

inline void write_summary_csv(const std::vector<ExperimentRow>& table, const std::string& path,
                              std::uint64_t seed, const std::string& config_text) {
    std::ofstream out(path);
    if (!out) throw StructureError("cannot write " + path);
    out << "# seed=" << seed << " config=" << std::hex << config_hash(config_text) << std::dec
        << "\n";
    out << "learner,cell,mean_abs,mean_time_s,failures\n";
    char buf[64];
    for (const auto& row : table) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d", row.curve.mean_abs, row.mean_time,
                      row.failures);
        out << row.learner << "," << row.cell << "," << buf << "\n";
    }
}

// -------------------------------------------------------- built-in structures

/// 3-node chain X0 -> X1 -> X2, all three-valued.
inline BayesNet make_chain3() {
    return BayesNet({"X0", "X1", "X2"}, {3, 3, 3}, {{}, {0}, {1}});
}

/// 9-node DAG with leaves X6, X7, X8 and X5 the common parent of X7 and X8.
inline BayesNet make_dag9() {
    return BayesNet({"X0", "X1", "X2", "X3", "X4", "X5", "X6", "X7", "X8"},
                    std::vector<int>(9, 3),
                    {{}, {0}, {0}, {1}, {2}, {3}, {4}, {5}, {5}});
}

inline BayesNet make_structure(const std::string& id) {
    if (id == "chain3") return make_chain3();
    if (id == "dag9") return make_dag9();
    throw ArgumentError("unknown structure id: " + id);
}

} // namespace sobn
