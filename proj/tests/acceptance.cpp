// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taskmaml/baseline.hpp"
#include "taskmaml/checkpoint.hpp"
#include "taskmaml/evalharness.hpp"
#include "taskmaml/io.hpp"
#include "taskmaml/meta.hpp"
#include "taskmaml/synthgen.hpp"
#include "taskmaml/taskbank.hpp"
#include "test_support.hpp"

using namespace taskmaml;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr int kGradInstances = 24;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsFloor = 1e-8;
constexpr double kGradSeconds = 60.0;
// Criterion 2
constexpr int kMetaInstances = 12;
constexpr double kMetaRelTol = 1e-3;
constexpr double kMetaAbsFloor = 1e-8;
constexpr double kMetaSeconds = 120.0;
// Criterion 3
constexpr double kHandExact = 1.28;
constexpr double kHandFirstOrder = 1.6;
constexpr double kHandTol = 4 * std::numeric_limits<double>::epsilon();
// Criteria 4-7
constexpr int kSeeds = 5;
constexpr double kGapThreshold = 0.05;
constexpr std::size_t kEvalShots = 5;
constexpr std::size_t kEvalSteps = 5;
constexpr double kDirectionalSeconds = 30 * 60.0;
// Criterion 8
constexpr double kProtocolSeconds = 60.0;

using Clock = std::chrono::steady_clock;

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double floored_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
    }
    return worst;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

// ---------------------------------------------------------------- 1

Outcome gradient_oracle() {
    const auto start = Clock::now();
    std::mt19937_64 rng(20240601);
    double worst = 0.0;
    std::size_t coords = 0;
    for (int i = 0; i < kGradInstances; ++i) {
        Backbone net(taskmaml::testing::random_small_config(rng));
        const auto theta = taskmaml::testing::random_params(net, rng);
        const auto batch = taskmaml::testing::random_batch(net.config().input, 6, rng);
        const auto g = net.gradient(theta, batch);
        const auto fd = taskmaml::testing::finite_difference_gradient(
            [&](const ParameterVector& p) { return net.loss(p, batch); }, theta, 1e-5);
        worst = std::max(worst, floored_relative_error(g.values(), fd, kGradAbsFloor));
        coords += theta.size();
    }
    const double secs = seconds_since(start);
    return {worst <= kGradRelTol && secs < kGradSeconds,
            fmt("%d instances, %zu coordinates, worst rel err %.2e (tol %.0e), %.1f s", kGradInstances, coords, worst,
                kGradRelTol, secs)};
}

// ---------------------------------------------------------------- 2

Outcome meta_gradient_oracle() {
    const auto start = Clock::now();
    std::mt19937_64 rng(777);
    double worst = 0.0;
    bool first_order_exact = true;
    for (int i = 0; i < kMetaInstances; ++i) {
        Backbone net(taskmaml::testing::random_small_config(rng));
        const auto theta = taskmaml::testing::random_params(net, rng);
        std::vector<TaskEpisode> eps;
        for (int t = 0; t < 2; ++t) {
            eps.push_back({{"s", "a"}, taskmaml::testing::random_batch(net.config().input, 6, rng),
                           taskmaml::testing::random_batch(net.config().input, 6, rng)});
        }
        const double alpha = 0.1;
        const auto exact = meta_gradient(net, theta, eps, alpha, 1, GradientOrder::exact);
        const auto fd = taskmaml::testing::finite_difference_gradient(
            [&](const ParameterVector& p) {
                double total = 0.0;
                for (const auto& ep : eps) total += net.loss(inner_update(net, p, ep.support, alpha, 1), ep.query);
                return total;
            },
            theta, 1e-5);
        worst = std::max(worst, floored_relative_error(exact.values(), fd, kMetaAbsFloor));

        auto formula = theta.zeros_like();
        for (const auto& ep : eps) formula += net.gradient(inner_update(net, theta, ep.support, alpha, 1), ep.query);
        first_order_exact &= meta_gradient(net, theta, eps, alpha, 1, GradientOrder::first_order) == formula;
    }
    const double secs = seconds_since(start);
    return {worst <= kMetaRelTol && first_order_exact && secs < kMetaSeconds,
            fmt("%d instances, worst rel err %.2e (tol %.0e), first-order bit-exact %s, %.1f s", kMetaInstances, worst,
                kMetaRelTol, first_order_exact ? "yes" : "no", secs)};
}

// ---------------------------------------------------------------- 3

Outcome hand_chain_rule() {
    taskmaml::testing::DiagonalQuadratic q(1);
    ParameterVector theta(q.layout(), {1.0});
    const auto batch = taskmaml::testing::DiagonalQuadratic::batch({2.0}, {0.0});
    const std::vector<TaskEpisode> eps{{{"s", "a"}, batch, batch}};
    const double exact = meta_gradient(q, theta, eps, 0.1, 1, GradientOrder::exact)[0];
    const double first = meta_gradient(q, theta, eps, 0.1, 1, GradientOrder::first_order)[0];
    const double adapted = inner_update(q, theta, batch, 0.1, 1)[0];
    const bool pass = std::abs(exact - kHandExact) <= kHandTol && std::abs(first - kHandFirstOrder) <= kHandTol &&
                      std::abs(adapted - 0.8) <= kHandTol;
    return {pass, fmt("theta'=%.17g exact=%.17g first-order=%.17g", adapted, exact, first)};
}

// ---------------------------------------------------------------- 4-7

BackboneConfig directional_backbone(const Dataset& ds, std::uint64_t seed) {
    BackboneConfig bc;
    bc.input = ds.shape;
    bc.conv_channels = {32, 16};
    bc.seed = seed;
    return bc;
}

MetaConfig directional_meta(std::uint64_t seed, std::size_t attributes) {
    MetaConfig mc;
    mc.alpha = 0.3;
    mc.beta = 0.01;
    mc.meta_iterations = 300;
    mc.seed = seed;
    return mc.resolved(attributes);
}

EvalConfig directional_eval(std::uint64_t seed) {
    EvalConfig ec;
    ec.alpha = 0.3;
    ec.k_values = {1, kEvalShots};
    ec.steps = kEvalSteps;
    ec.repetitions = 100;
    ec.seed = seed;
    return ec;
}

struct SeedResult {
    std::map<std::size_t, double> meta, base;  // grand mean per K
    double meta_step_gain = 0.0, base_step_gain = 0.0;
};

struct DirectionalResults {
    std::vector<SeedResult> seeds;
    double seconds = 0.0;
};

const DirectionalResults& directional_results() {
    static const DirectionalResults results = [] {
        DirectionalResults out;
        const auto start = Clock::now();
        for (int s = 0; s < kSeeds; ++s) {
            SynthConfig sc;  // 8 subjects, 6 attributes, shift 1, rates [0.05, 0.4]
            sc.seed = static_cast<std::uint64_t>(s);
            const Dataset ds = generate_bank(sc);
            const Backbone net(directional_backbone(ds, sc.seed));
            const MetaConfig mc = directional_meta(sc.seed, ds.attributes.size());
            const BaselineConfig bcfg = BaselineConfig::matching(mc);
            FoldParameters meta, base;
            for (const auto& subject : ds.subjects) {
                const auto plan = enumerate_tasks(ds, subject);
                TaskBankSource source(ds, plan, mc.shots_train);
                meta.emplace(subject, meta_train(net, mc, source));
                base.emplace(subject, train_baseline(net, baseline_training_set(ds, plan),
                                                     bcfg.resolved_iterations(mc), bcfg));
            }
            const EvalConfig ec = directional_eval(sc.seed);
            SeedResult r;
            for (const auto& c : run_loso(net, ds, meta, base, ec)) {
                r.meta[c.shots] = c.meta.grand_mean;
                r.base[c.shots] = c.baseline.grand_mean;
            }
            std::vector<std::vector<SweepPoint>> ms, bs;
            for (const auto& subject : ds.subjects) {
                const auto tasks = enumerate_tasks(ds, subject).test_tasks;
                ms.push_back(gradient_step_sweep(net, meta.at(subject), ds, tasks, {kEvalShots}, 1, ec));
                bs.push_back(gradient_step_sweep(net, base.at(subject), ds, tasks, {kEvalShots}, 1, ec));
            }
            const auto m = merge_sweeps(ms), b = merge_sweeps(bs);
            r.meta_step_gain = m[1].mean_accuracy - m[0].mean_accuracy;
            r.base_step_gain = b[1].mean_accuracy - b[0].mean_accuracy;
            std::printf("  seed %d: K=1 meta %.4f base %.4f | K=5 meta %.4f base %.4f | step-1 gain meta %+.4f base %+.4f\n",
                        s, r.meta[1], r.base[1], r.meta[kEvalShots], r.base[kEvalShots], r.meta_step_gain,
                        r.base_step_gain);
            std::fflush(stdout);
            out.seeds.push_back(r);
        }
        out.seconds = seconds_since(start);
        return out;
    }();
    return results;
}

double mean_over_seeds(const std::function<double(const SeedResult&)>& f) {
    double sum = 0.0;
    for (const auto& r : directional_results().seeds) sum += f(r);
    return sum / static_cast<double>(directional_results().seeds.size());
}

Outcome directional_gap() {
    const auto& res = directional_results();
    const double meta = mean_over_seeds([](const SeedResult& r) { return r.meta.at(kEvalShots); });
    const double base = mean_over_seeds([](const SeedResult& r) { return r.base.at(kEvalShots); });
    return {meta - base >= kGapThreshold && res.seconds < kDirectionalSeconds,
            fmt("K=5 G=5 over %d seeds: meta %.4f baseline %.4f gap %.4f (need >= %.2f), %.1f s", kSeeds, meta, base,
                meta - base, kGapThreshold, res.seconds)};
}

Outcome shot_scaling() {
    const double g5 = mean_over_seeds([](const SeedResult& r) { return r.meta.at(kEvalShots) - r.base.at(kEvalShots); });
    const double g1 = mean_over_seeds([](const SeedResult& r) { return r.meta.at(1) - r.base.at(1); });
    return {g5 >= g1, fmt("mean gap K=5 %.4f vs K=1 %.4f", g5, g1)};
}

Outcome step_curve() {
    const double m = mean_over_seeds([](const SeedResult& r) { return r.meta_step_gain; });
    const double b = mean_over_seeds([](const SeedResult& r) { return r.base_step_gain; });
    return {m > b, fmt("K=5 accuracy gain from step 0 to step 1: meta %+.4f baseline %+.4f", m, b)};
}

Outcome novel_attribute() {
    const auto start = Clock::now();
    double meta_sum = 0.0, base_sum = 0.0;
    int wins = 0;
    for (int s = 0; s < kSeeds; ++s) {
        // Source: 8 subjects without the last attribute. Target: 4 unseen subjects with every attribute.
        SynthConfig sc;
        sc.n_subjects = 12;
        sc.seed = static_cast<std::uint64_t>(s);
        const Dataset full = generate_bank(sc);
        const std::string novel = full.attributes.back();
        const std::vector<std::string> src_subjects(full.subjects.begin(), full.subjects.begin() + 8);
        const std::vector<std::string> tgt_subjects(full.subjects.begin() + 8, full.subjects.end());
        const std::vector<std::string> src_attrs(full.attributes.begin(), full.attributes.end() - 1);
        const Dataset source_bank = subset(full, src_subjects, src_attrs);
        const Dataset target_bank = subset(full, tgt_subjects, full.attributes);

        const Backbone net(directional_backbone(full, sc.seed));
        const MetaConfig mc = directional_meta(sc.seed, src_attrs.size());
        const BaselineConfig bcfg = BaselineConfig::matching(mc);
        const auto plan = enumerate_all_tasks(source_bank);
        TaskBankSource source(source_bank, plan, mc.shots_train);
        const auto meta = meta_train(net, mc, source);
        const auto base =
            train_baseline(net, baseline_training_set(source_bank, plan), bcfg.resolved_iterations(mc), bcfg);

        const EvalConfig ec = directional_eval(sc.seed);
        const auto rm = cross_bank_eval(net, meta, target_bank, src_attrs, kEvalShots, ec, "meta");
        const auto rb = cross_bank_eval(net, base, target_bank, src_attrs, kEvalShots, ec, "baseline");
        double m = 0.0, b = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < rm.tasks.size(); ++i) {
            if (rm.tasks[i].task.attribute != novel) continue;
            m += rm.tasks[i].mean_accuracy;
            b += rb.tasks[i].mean_accuracy;
            ++n;
        }
        m /= n;
        b /= n;
        std::printf("  seed %d: novel %s meta %.4f base %.4f\n", s, novel.c_str(), m, b);
        std::fflush(stdout);
        meta_sum += m;
        base_sum += b;
        wins += m > b;
    }
    const double m = meta_sum / kSeeds, b = base_sum / kSeeds;
    return {m > b, fmt("novel-attribute accuracy at K=5 over %d seeds: meta %.4f baseline %.4f (meta ahead on %d/%d), %.1f s",
                       kSeeds, m, b, wins, kSeeds, seconds_since(start))};
}

// ---------------------------------------------------------------- 8

/// Records every dataset row handed to meta-training.
class AuditingSource final : public EpisodeSource {
public:
    explicit AuditingSource(EpisodeSource& inner) : inner_(inner) {}
    std::vector<TaskEpisode> sample(std::size_t count, Rng& rng) override {
        auto eps = inner_.sample(count, rng);
        for (const auto& ep : eps) {
            rows.insert(ep.support.rows.begin(), ep.support.rows.end());
            rows.insert(ep.query.rows.begin(), ep.query.rows.end());
        }
        return eps;
    }
    std::set<std::size_t> rows;

private:
    EpisodeSource& inner_;
};

struct Tally {
    std::map<std::string, std::size_t> checks, failures;
    void expect(const std::string& group, bool ok) {
        ++checks[group];
        if (!ok) ++failures[group];
    }
    bool clean() const {
        for (const auto& [g, n] : failures) {
            if (n) return false;
        }
        return true;
    }
};

Dataset protocol_bank(std::uint64_t seed) {
    SynthConfig sc;
    sc.n_subjects = 4;
    sc.n_attributes = 3;
    sc.examples_per_subject = 40;
    sc.feature_dim = 4;
    sc.seed = seed;
    return generate_bank(sc);
}

Backbone protocol_net(const Dataset& ds) {
    BackboneConfig bc;
    bc.input = ds.shape;
    bc.conv_channels = {6};
    bc.precision = Precision::f64;
    return Backbone(bc);
}

void audit_samplers(const Dataset& ds, Tally& t) {
    for (const auto& task : enumerate_all_tasks(ds).train_tasks) {
        const auto pools = task_pools(ds, task);
        const std::size_t P = pools.positives.size(), N = pools.negatives.size();
        const auto subject = ds.subject_index(task.subject);
        const auto attr = ds.attribute_index(task.attribute);
        for (std::size_t shots : {1u, 2u, 5u}) {
            for (std::uint64_t seed = 0; seed < 100; ++seed) {
                Rng rng(seed);
                auto result = sample_episode(ds, task, shots, rng);
                const bool trainable = P >= 2 * shots && N >= 2 * shots;
                t.expect("skip rule", std::holds_alternative<TaskEpisode>(result) == trainable);
                if (!trainable) {
                    const auto& skip = std::get<SkippedTask>(result);
                    t.expect("skip rule", skip.positive_deficit == (P >= 2 * shots ? 0 : 2 * shots - P));
                    t.expect("skip rule", skip.negative_deficit == (N >= 2 * shots ? 0 : 2 * shots - N));
                    continue;
                }
                const auto& ep = std::get<TaskEpisode>(result);
                t.expect("balance", ep.support.size() == 2 * shots && ep.support.positives() == shots);
                t.expect("balance", ep.query.size() == 2 * shots && ep.query.positives() == shots);
                std::set<std::string> ids;
                for (const auto* b : {&ep.support, &ep.query}) {
                    for (std::size_t i = 0; i < b->size(); ++i) {
                        ids.insert(ds.examples[b->rows[i]].id);
                        t.expect("labels", b->labels[i] == ds.label(b->rows[i], attr));
                        t.expect("labels", ds.examples[b->rows[i]].subject == subject);
                    }
                }
                t.expect("disjointness", ids.size() == 4 * shots);
            }
        }
        for (std::size_t shots : {1u, 5u}) {
            const std::size_t eval_per_class = 10;
            for (std::uint64_t seed = 0; seed < 100; ++seed) {
                Rng rng(seed);
                const auto pair = sample_adaptation_pair(ds, task, shots, eval_per_class, rng);
                t.expect("replace rule", pair.support.size() == 2 * shots);
                t.expect("replace rule", pair.evalset.size() == 2 * eval_per_class);
                const std::size_t sp = N >= shots ? std::min(shots, P) : 2 * shots - N;
                const std::size_t p_left = P - sp, n_left = N - (2 * shots - sp);
                const std::size_t ep =
                    n_left >= eval_per_class ? std::min(eval_per_class, p_left) : 2 * eval_per_class - n_left;
                t.expect("replace rule", pair.support.positives() == sp);
                t.expect("replace rule", pair.evalset.positives() == ep);
                std::set<std::size_t> rows(pair.support.rows.begin(), pair.support.rows.end());
                rows.insert(pair.evalset.rows.begin(), pair.evalset.rows.end());
                t.expect("disjointness", rows.size() == 2 * shots + 2 * eval_per_class);
            }
        }
    }
}

void audit_leakage(const Dataset& ds, Tally& t) {
    const Backbone net = protocol_net(ds);
    MetaConfig mc;
    mc.alpha = 0.3;
    mc.beta = 0.01;
    mc.meta_iterations = 40;
    mc.meta_batch_size = 1;
    EvalConfig ec;
    ec.repetitions = 5;
    ec.alpha = 0.3;
    for (const auto& held : ds.subjects) {
        const auto h = ds.subject_index(held);
        const auto plan = apply_skip_rule(ds, enumerate_tasks(ds, held), mc.shots_train);
        for (const auto& task : plan.train_tasks) t.expect("LOSO leakage", task.subject != held);
        for (const auto& task : plan.test_tasks) t.expect("LOSO leakage", task.subject == held);
        TaskBankSource inner(ds, plan, mc.shots_train);
        AuditingSource audit(inner);
        const auto theta = meta_train(net, mc, audit);
        t.expect("LOSO leakage", !audit.rows.empty());
        for (auto r : audit.rows) t.expect("LOSO leakage", ds.examples[r].subject != h);
        std::set<std::string> held_ids;
        for (auto r : ds.subject_rows(h)) held_ids.insert(ds.examples[r].id);
        const auto merged = baseline_training_set(ds, plan);
        t.expect("LOSO leakage", !merged.data.examples.empty());
        for (const auto& e : merged.data.examples) t.expect("LOSO leakage", !held_ids.count(e.id));
        for (const auto& task : plan.test_tasks) {
            for (std::size_t k : ec.k_values) {
                const auto ev = evaluate_task(net, theta, ds, task, k, ec, true);
                for (const auto& log : ev.log) {
                    for (auto r : log.support_rows) t.expect("LOSO leakage", ds.examples[r].subject == h);
                    for (auto r : log.eval_rows) t.expect("LOSO leakage", ds.examples[r].subject == h);
                }
            }
        }
    }
}

void audit_aggregation(const Dataset& ds, Tally& t) {
    const Backbone net = protocol_net(ds);
    FoldParameters meta, base;
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
        meta.emplace(ds.subjects[i], net.init_params(100 + i));
        base.emplace(ds.subjects[i], net.init_params(200 + i));
    }
    EvalConfig ec;
    ec.repetitions = 7;
    ec.alpha = 0.3;
    for (const auto& c : run_loso(net, ds, meta, base, ec)) {
        for (const EvalReport* r : {&c.meta, &c.baseline}) {
            const auto& folds = r == &c.meta ? meta : base;
            t.expect("aggregation", r->tasks.size() == ds.subjects.size() * ds.attributes.size());
            double grand = 0.0;
            std::map<std::string, std::pair<double, int>> by_attr, by_subj;
            for (const auto& s : r->tasks) {
                const auto acc = evaluate_task(net, folds.at(s.task.subject), ds, s.task, c.shots, ec).accuracies;
                double sum = 0.0;
                for (double a : acc) sum += a;
                t.expect("aggregation", std::abs(s.mean_accuracy - sum / acc.size()) < 1e-12);
                t.expect("aggregation", s.repetitions == acc.size());
                grand += s.mean_accuracy;
                by_attr[s.task.attribute].first += s.mean_accuracy;
                ++by_attr[s.task.attribute].second;
                by_subj[s.task.subject].first += s.mean_accuracy;
                ++by_subj[s.task.subject].second;
            }
            t.expect("aggregation", std::abs(r->grand_mean - grand / r->tasks.size()) < 1e-12);
            for (const auto& [a, v] : r->per_attribute) {
                t.expect("aggregation", std::abs(v - by_attr[a].first / by_attr[a].second) < 1e-12);
            }
            for (const auto& [s, v] : r->per_subject) {
                t.expect("aggregation", std::abs(v - by_subj[s].first / by_subj[s].second) < 1e-12);
            }
        }
    }
}

std::map<std::string, std::string> pipeline_bytes(const fs::path& dir) {
    fs::remove_all(dir);
    write_dataset(protocol_bank(9), dir / "bank");
    const Dataset ds = load_dataset(dir / "bank");
    const Backbone net = protocol_net(ds);
    MetaConfig mc;
    mc.alpha = 0.3;
    mc.beta = 0.01;
    mc.meta_iterations = 20;
    mc.meta_batch_size = 1;
    mc.seed = 4;
    FoldParameters meta, base;
    for (const auto& s : ds.subjects) {
        const auto plan = enumerate_tasks(ds, s);
        TaskBankSource source(ds, plan, mc.shots_train);
        meta.emplace(s, meta_train(net, mc, source));
        auto bcfg = BaselineConfig::matching(mc);
        base.emplace(s, train_baseline(net, baseline_training_set(ds, plan), 40, bcfg));
        save_checkpoint(dir / ("meta_" + s + ".ckpt"), {net.config(), meta.at(s), {"meta", s, ds.attributes}});
    }
    EvalConfig ec;
    ec.repetitions = 5;
    ec.alpha = 0.3;
    const auto cmp = run_loso(net, ds, meta, base, ec);
    io::write_file_atomic(dir / "attribute_table.csv", attribute_table_csv(cmp));
    io::write_file_atomic(dir / "summary.json", summary_json(cmp));
    io::write_file_atomic(dir / "tasks.csv", task_csv(cmp.back().meta));
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
    }
    return files;
}

Outcome protocol_invariants() {
    const auto start = Clock::now();
    Tally t;
    for (std::uint64_t seed : {1u, 2u}) {
        const Dataset ds = protocol_bank(seed);
        audit_samplers(ds, t);
        audit_leakage(ds, t);
        audit_aggregation(ds, t);
    }
    const auto root = fs::temp_directory_path() / "taskmaml_acceptance";
    const auto a = pipeline_bytes(root / "a");
    const auto b = pipeline_bytes(root / "b");
    t.expect("determinism", a.size() > 10);
    t.expect("determinism", a == b);
    fs::remove_all(root);

    const double secs = seconds_since(start);
    std::string detail;
    for (const auto& [g, n] : t.checks) detail += fmt("%s %zu/%zu, ", g.c_str(), n - t.failures[g], n);
    detail += fmt("%.1f s", secs);
    return {t.clean() && secs < kProtocolSeconds, detail};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient oracle", gradient_oracle},
        {2, "meta-gradient oracle", meta_gradient_oracle},
        {3, "hand-computed chain rule", hand_chain_rule},
        {4, "directional LOSO gap at K=5", directional_gap},
        {5, "shot-scaling trend", shot_scaling},
        {6, "step-curve trend", step_curve},
        {7, "novel-attribute transfer", novel_attribute},
        {8, "protocol invariants", protocol_invariants},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
