#include "sgpm/runner.hpp"

#include "sgpm/error.hpp"
#include "sgpm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace sgpm {

namespace fs = std::filesystem;

namespace {

// Stream ids for deriving independent rngs from the run seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamTrain = 2;
constexpr std::uint64_t kStreamMask = 3;
constexpr std::uint64_t kStreamGpm = 4;
constexpr std::uint64_t kStreamAnalyze = 5;

std::string format6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string metrics_csv(const std::string& run_id, const Summary& s, std::uint64_t seed,
                        const std::string& hash) {
    std::ostringstream out;
    out << "run_id,avg_accuracy,bwt,seed,config_hash\n";
    out << run_id << ',' << format6(s.avg_accuracy) << ',';
    if (s.backward_transfer)
        out << format6(*s.backward_transfer);
    else
        out << "na";
    out << ',' << seed << ',' << hash << '\n';
    return out.str();
}

bool all_saturated(const GpmMemory& memory) {
    for (const auto& b : memory.bases)
        if (b.cols() < b.rows()) return false;
    return true;
}

// Gradients averaged over per-sample passes so each sample gets its own
// dropout mask. Slow path behind the mask_per_sample toggle.
LossAndGrads per_sample_loss_and_grads(const MlpModel& model, const DenseMatrix& bx,
                                       const std::vector<int>& by, const DropoutState& state,
                                       Rng& mask_rng, const std::vector<DenseMatrix>* bases,
                                       std::vector<std::vector<std::vector<std::uint32_t>>>*
                                           winners_out) {
    LossAndGrads acc;
    const std::size_t B = by.size();
    if (winners_out) winners_out->assign(model.num_hidden(), {});
    for (std::size_t s = 0; s < B; ++s) {
        DenseMatrix one(bx.rows(), 1);
        for (std::size_t r = 0; r < bx.rows(); ++r) one(r, 0) = bx(r, s);
        RetainMasks masks = sample_retain_mask(state, mask_rng);
        std::vector<std::vector<std::vector<std::uint32_t>>> winners;
        LossAndGrads part = loss_and_grads(model, one, {by[s]}, &masks, bases,
                                           winners_out ? &winners : nullptr);
        if (winners_out)
            for (std::size_t l = 0; l < winners.size(); ++l)
                (*winners_out)[l].push_back(std::move(winners[l][0]));
        if (acc.grads.empty()) {
            acc = std::move(part);
            continue;
        }
        acc.loss += part.loss;
        for (std::size_t l = 0; l < acc.grads.size(); ++l)
            for (std::size_t i = 0; i < acc.grads[l].size(); ++i)
                acc.grads[l].data()[i] += part.grads[l].data()[i];
    }
    acc.loss /= static_cast<double>(B);
    for (auto& g : acc.grads)
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] /= static_cast<double>(B);
    return acc;
}

} // namespace

TaskStream build_stream(const ExperimentConfig& config, std::uint64_t seed) {
    if (config.benchmark == Benchmark::kSwissRoll) {
        SwissRollParams p;
        p.theta_min = config.sr_theta_min;
        p.theta_max = config.sr_theta_max;
        p.noise_sigma = config.sr_noise_sigma;
        return gen_swiss_roll(config.task_count, config.sr_n_per_class, config.sr_noise_sigma,
                              seed, p);
    }
    MnistData mnist = load_mnist(config.data_dir, config.mnist_files);
    PermutedMnistParams p;
    p.val_size = config.pm_val_size;
    p.test_per_task = config.pm_test_per_task;
    return permuted_mnist_stream(mnist, config.task_count, config.pm_train_per_task, seed, p);
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open " + tmp + " for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw Error("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error("cannot rename " + tmp + " to " + path);
}

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const std::string& resume_ckpt) {
    config.validate();
    const std::string echo = config.echo_json();
    const std::string run_id = config.variant_tag() + "_s" + std::to_string(seed);
    const fs::path run_dir = fs::path(config.out_dir) / run_id;
    const fs::path ckpt_dir = run_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    write_file_atomic((run_dir / "config_echo.json").string(), echo);

    TaskStream stream = build_stream(config, seed);
    const std::size_t T = stream.task_count();
    const std::size_t input_dim = stream.input_dim();

    MlpModel model;
    GpmMemory memory;
    DropoutState dropout;
    Rng train_rng(0), mask_rng(0), gpm_rng(0);
    AccuracyMatrix accuracy(T);
    std::vector<std::vector<std::vector<double>>> nu_history;
    std::size_t first_task = 0;
    std::ostringstream log;

    if (!resume_ckpt.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_ckpt);
        if (ckpt.config_echo != echo)
            throw Error("resume: checkpoint config does not match the supplied config");
        if (ckpt.seed != seed)
            throw Error("resume: checkpoint seed " + std::to_string(ckpt.seed) +
                        " does not match run seed " + std::to_string(seed));
        model = std::move(ckpt.model);
        memory = std::move(ckpt.memory);
        dropout = std::move(ckpt.dropout);
        train_rng.set_state(ckpt.train_rng);
        mask_rng.set_state(ckpt.mask_rng);
        gpm_rng.set_state(ckpt.gpm_rng);
        accuracy = std::move(ckpt.accuracy);
        nu_history = std::move(ckpt.nu_history);
        first_task = ckpt.completed_tasks;
        log << "resumed after task " << first_task << "\n";
    } else {
        Rng init_rng = Rng::derive(seed, kStreamInit);
        model = MlpModel::init(input_dim, config.hidden, stream.class_count, config.k_winner,
                               init_rng);
        memory = GpmMemory::make(model, config.eps_th, config.n_samples);
        std::vector<std::size_t> widths;
        for (std::size_t h : config.hidden) widths.push_back(h);
        dropout = DropoutState::make(widths, config.alpha, seed);
        train_rng = Rng::derive(seed, kStreamTrain);
        mask_rng = Rng::derive(seed, kStreamMask);
        gpm_rng = Rng::derive(seed, kStreamGpm);
    }

    const double lr = config.learning_rate;
    const std::size_t epochs = config.effective_epochs();
    const std::size_t batch_size = config.effective_batch_size();
    const bool use_dropout = config.dropout != DropoutMode::kNone;

    for (std::size_t t = first_task; t < T; ++t) {
        const LabeledDataset& train = stream.tasks[t].train;
        const std::size_t n = train.size();
        const std::vector<DenseMatrix>* bases = t > 0 ? &projection_bases(memory) : nullptr;

        if (!use_dropout && t > 0 && all_saturated(memory)) {
            // Every projected gradient is zero by the saturation rule.
            log << "task " << t + 1 << "/" << T << " skipped: memory saturated\n";
        } else {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            double last_loss = 0.0;
            std::vector<std::vector<std::vector<std::uint32_t>>> batch_winners;
            for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
                train_rng.shuffle(order);
                for (std::size_t start = 0; start < n; start += batch_size) {
                    const std::size_t bs = std::min(batch_size, n - start);
                    DenseMatrix bx(train.inputs.rows(), bs);
                    std::vector<int> by(bs);
                    for (std::size_t c = 0; c < bs; ++c) {
                        const std::size_t src = order[start + c];
                        for (std::size_t r = 0; r < bx.rows(); ++r)
                            bx(r, c) = train.inputs(r, src);
                        by[c] = train.labels[src];
                    }

                    LossAndGrads lg;
                    std::vector<std::vector<std::vector<std::uint32_t>>> winners;
                    auto* wout = use_dropout ? &winners : nullptr;
                    if (use_dropout && config.mask_per_sample) {
                        lg = per_sample_loss_and_grads(model, bx, by, dropout, mask_rng, bases,
                                                       wout);
                    } else if (use_dropout) {
                        RetainMasks masks = sample_retain_mask(dropout, mask_rng);
                        lg = loss_and_grads(model, bx, by, &masks, bases, wout);
                    } else {
                        lg = loss_and_grads(model, bx, by, nullptr, bases);
                    }
                    sgd_step(model, lg.grads, lr, nullptr);
                    last_loss = lg.loss;
                    if (use_dropout) update_counters(dropout, winners);
                }
            }
            log << "task " << t + 1 << "/" << T << " trained: epochs=" << epochs
                << " final_loss=" << format6(last_loss) << "\n";
        }

        // Evaluate every seen task's test split.
        std::vector<double> row(t + 1);
        for (std::size_t p = 0; p <= t; ++p) row[p] = evaluate(model, stream.tasks[p].test);
        accuracy.set_row(t, row);
        {
            std::ostringstream line;
            line << "task " << t + 1 << " eval:";
            for (double a : row) line << ' ' << format6(a);
            log << line.str() << "\n";
        }

        // Memory and dropout bookkeeping at the boundary.
        absorb_task(memory, model, train, gpm_rng, config.gpm_threshold);
        nu_history.push_back(activation_stats(model, stream.tasks[t].val).nu);
        if (use_dropout) {
            refresh_retention(dropout);
            if (config.dropout == DropoutMode::kRandom) flatten_retention_to_mean(dropout);
        }

        // Persist artifacts for this boundary.
        write_file_atomic((run_dir / "accuracy_matrix.csv").string(), accuracy.to_csv());
        write_file_atomic((run_dir / "log.txt").string(), log.str());
        Checkpoint ckpt;
        ckpt.model = model;
        ckpt.memory = memory;
        ckpt.dropout = dropout;
        ckpt.train_rng = train_rng.state();
        ckpt.mask_rng = mask_rng.state();
        ckpt.gpm_rng = gpm_rng.state();
        ckpt.completed_tasks = t + 1;
        ckpt.seed = seed;
        ckpt.accuracy = accuracy;
        ckpt.nu_history = nu_history;
        ckpt.config_echo = echo;
        const fs::path ckpt_path = ckpt_dir / ("task_" + std::to_string(t + 1) + ".ckpt");
        save_checkpoint(ckpt, ckpt_path.string());
        if (t > 0) {
            const fs::path prev = ckpt_dir / ("task_" + std::to_string(t) + ".ckpt");
            std::error_code ec;
            fs::remove(prev, ec);   // keep only the latest boundary
        }
    }

    RunResult result;
    result.run_dir = run_dir.string();
    result.accuracy = accuracy;
    result.summary = summarize(accuracy);
    result.nu_history = nu_history;
    result.final_basis_dims = basis_dimensions(memory);
    write_file_atomic((run_dir / "metrics.csv").string(),
                      metrics_csv(run_id, result.summary, seed, config.config_hash()));
    write_file_atomic((run_dir / "log.txt").string(), log.str());
    return result;
}

namespace {

struct MetricsRow {
    std::string run_id;
    double avg = 0.0;
    bool has_bt = false;
    double bt = 0.0;
};

MetricsRow parse_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("compare: missing " + path);
    std::string header, line;
    std::getline(in, header);
    if (!std::getline(in, line)) throw Error("compare: empty metrics in " + path);
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 5) throw Error("compare: malformed metrics row in " + path);
    MetricsRow row;
    row.run_id = fields[0];
    row.avg = std::stod(fields[1]);
    if (fields[2] != "na") {
        row.bt = std::stod(fields[2]);
        row.has_bt = true;
    }
    return row;
}

std::string strip_seed_suffix(const std::string& run_id) {
    const std::size_t pos = run_id.rfind("_s");
    if (pos == std::string::npos) return run_id;
    for (std::size_t i = pos + 2; i < run_id.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(run_id[i]))) return run_id;
    return run_id.substr(0, pos);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

} // namespace

std::string compare_runs(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw Error("compare: no run directories given");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    std::vector<std::string> order;
    for (const auto& dir : run_dirs) {
        MetricsRow row = parse_metrics_csv((fs::path(dir) / "metrics.csv").string());
        const std::string variant = strip_seed_suffix(row.run_id);
        if (!groups.count(variant)) order.push_back(variant);
        groups[variant].first.push_back(row.avg);
        if (row.has_bt) groups[variant].second.push_back(row.bt);
    }

    std::ostringstream out;
    out << "variant,runs,avg_accuracy_mean,avg_accuracy_std,bt_mean,bt_std\n";
    for (const auto& variant : order) {
        const auto& [avgs, bts] = groups[variant];
        auto [am, as] = mean_std(avgs);
        out << variant << ',' << avgs.size() << ',' << format6(am) << ',' << format6(as) << ',';
        if (bts.empty()) {
            out << "na,na\n";
        } else {
            auto [bm, bs] = mean_std(bts);
            out << format6(bm) << ',' << format6(bs) << '\n';
        }
    }
    return out.str();
}

std::string analyze(const std::string& ckpt_path, AnalyzeMode mode, std::size_t max_components) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ExperimentConfig config = parse_config_text(ckpt.config_echo);
    const std::string run_id = config.variant_tag() + "_s" + std::to_string(ckpt.seed);

    std::ostringstream out;
    switch (mode) {
        case AnalyzeMode::kDims: {
            out << "layer,basis_dim\n";
            std::vector<std::size_t> dims = basis_dimensions(ckpt.memory);
            for (std::size_t l = 0; l < dims.size(); ++l)
                out << l << ',' << dims[l] << '\n';
            break;
        }
        case AnalyzeMode::kJsd: {
            if (ckpt.nu_history.size() < 2)
                throw Error("analyze jsd: need at least two completed tasks");
            out << "alpha,layer,seed,jsd_nats\n";
            for (std::size_t t = 0; t + 1 < ckpt.nu_history.size(); ++t) {
                const auto& a = ckpt.nu_history[t];
                const auto& b = ckpt.nu_history[t + 1];
                for (std::size_t l = 0; l < a.size(); ++l) {
                    auto normalize = [](const std::vector<double>& nu) {
                        double total = std::accumulate(nu.begin(), nu.end(), 0.0);
                        std::vector<double> q(nu.size());
                        if (total > 0.0)
                            for (std::size_t j = 0; j < nu.size(); ++j) q[j] = nu[j] / total;
                        else
                            std::fill(q.begin(), q.end(), 1.0 / static_cast<double>(nu.size()));
                        return q;
                    };
                    const double d = jsd(normalize(a[l]), normalize(b[l]));
                    char buf[40];
                    std::snprintf(buf, sizeof buf, "%.6f", d);
                    out << config.alpha << ',' << l + 1 << ',' << ckpt.seed << ',' << buf << '\n';
                }
            }
            break;
        }
        case AnalyzeMode::kVariance: {
            if (ckpt.completed_tasks == 0) throw Error("analyze variance: no completed task");
            TaskStream stream = build_stream(config, ckpt.seed);
            const LabeledDataset& data = stream.tasks[ckpt.completed_tasks - 1].train;
            Rng rng = Rng::derive(ckpt.seed, kStreamAnalyze);
            std::vector<DenseMatrix> acts =
                collect_all_activations(ckpt.model, data, config.n_samples, rng);
            out << "model,layer,component_index,cumulative_fraction\n";
            for (std::size_t l = 0; l < acts.size(); ++l) {
                std::vector<double> curve = captured_variance_curve(acts[l], max_components);
                for (std::size_t r = 0; r < curve.size(); ++r) {
                    char buf[40];
                    std::snprintf(buf, sizeof buf, "%.6f", curve[r]);
                    out << run_id << ',' << l << ',' << r + 1 << ',' << buf << '\n';
                }
            }
            break;
        }
    }
    return out.str();
}

} // namespace sgpm
