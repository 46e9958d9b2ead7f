#include "sgpm/config.hpp"

#include "sgpm/error.hpp"
#include "sgpm/net.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace sgpm {

using nlohmann::json;

namespace {

std::size_t to_count(const json& v, const char* key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw Error(std::string("config: ") + key + " must be a non-negative integer");
    return v.get<std::size_t>();
}

double to_real(const json& v, const char* key) {
    if (!v.is_number()) throw Error(std::string("config: ") + key + " must be a number");
    return v.get<double>();
}

std::string benchmark_name(Benchmark b) {
    return b == Benchmark::kSwissRoll ? "swissroll" : "permuted_mnist";
}

std::string dropout_name(DropoutMode d) {
    switch (d) {
        case DropoutMode::kNone: return "none";
        case DropoutMode::kHeterogeneous: return "heterogeneous";
        default: return "random";
    }
}

} // namespace

std::size_t ExperimentConfig::effective_epochs() const {
    if (epochs > 0) return epochs;
    return benchmark == Benchmark::kSwissRoll ? 200 : 5;
}

std::size_t ExperimentConfig::effective_batch_size() const {
    if (batch_size > 0) return batch_size;
    return benchmark == Benchmark::kSwissRoll ? 32 : 64;
}

bool ExperimentConfig::uses_kwinner() const {
    for (std::size_t k : k_winner)
        if (k != kDense) return true;
    return false;
}

void ExperimentConfig::validate() const {
    if (task_count < 1) throw Error("config: T must be >= 1");
    if (hidden.empty()) throw Error("config: hidden must name at least one layer");
    for (std::size_t h : hidden)
        if (h == 0) throw Error("config: hidden widths must be positive");
    if (k_winner.size() != hidden.size())
        throw Error("config: k must give one value per hidden layer");
    for (std::size_t i = 0; i < hidden.size(); ++i)
        if (k_winner[i] != kDense && k_winner[i] > hidden[i])
            throw Error("config: k exceeds hidden width at layer " + std::to_string(i + 1));
    if (alpha_auto && !uses_kwinner())
        throw Error("config: alpha \"auto\" requires k-winner activations");
    if (alpha < 0.0) throw Error("config: alpha must be >= 0");
    if (!(eps_th > 0.0) || eps_th > 1.0) throw Error("config: eps_th must lie in (0,1]");
    if (!(learning_rate > 0.0)) throw Error("config: lr must be > 0");
    if (n_samples == 0) throw Error("config: n_samples must be >= 1");
    if (seeds.empty()) throw Error("config: seeds must not be empty");
    if (benchmark == Benchmark::kSwissRoll) {
        if (sr_n_per_class < 4) throw Error("config: sr_n_per_class must be >= 4");
        if (sr_noise_sigma < 0.0) throw Error("config: sr_noise_sigma must be >= 0");
        if (!(sr_theta_max > sr_theta_min)) throw Error("config: sr_theta_max must exceed sr_theta_min");
    }
    if (dropout == DropoutMode::kNone && alpha != 0.0 && !alpha_auto)
        throw Error("config: alpha set but dropout is \"none\"");
}

std::string ExperimentConfig::echo_json() const {
    json j;
    j["benchmark"] = benchmark_name(benchmark);
    j["T"] = task_count;
    j["hidden"] = hidden;
    json ks = json::array();
    for (std::size_t k : k_winner)
        if (k == kDense)
            ks.push_back("dense");
        else
            ks.push_back(k);
    j["k"] = ks;
    j["dropout"] = dropout_name(dropout);
    j["alpha"] = alpha;
    j["alpha_auto"] = alpha_auto;
    j["eps_th"] = eps_th;
    j["lr"] = learning_rate;
    j["epochs"] = effective_epochs();
    j["batch_size"] = effective_batch_size();
    j["n_samples"] = n_samples;
    j["mask_per_sample"] = mask_per_sample;
    j["gpm_threshold"] = gpm_threshold == GpmThreshold::kJoint ? "joint" : "residual";
    j["seeds"] = seeds;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    j["sr_n_per_class"] = sr_n_per_class;
    j["sr_noise_sigma"] = sr_noise_sigma;
    j["sr_theta_min"] = sr_theta_min;
    j["sr_theta_max"] = sr_theta_max;
    j["pm_train_per_task"] = pm_train_per_task;
    j["pm_val_size"] = pm_val_size;
    j["pm_test_per_task"] = pm_test_per_task;
    j["mnist_train_images"] = mnist_files.train_images;
    j["mnist_train_labels"] = mnist_files.train_labels;
    j["mnist_test_images"] = mnist_files.test_images;
    j["mnist_test_labels"] = mnist_files.test_labels;
    return j.dump(2) + "\n";
}

std::string ExperimentConfig::config_hash() const {
    const std::string text = echo_json();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::variant_tag() const {
    std::ostringstream tag;
    tag << benchmark_name(benchmark) << "_T" << task_count;
    tag << "_k";
    bool first = true;
    bool all_same = true;
    for (std::size_t k : k_winner) all_same = all_same && k == k_winner.front();
    const std::size_t limit = all_same ? 1 : k_winner.size();
    for (std::size_t i = 0; i < limit; ++i) {
        if (!first) tag << "-";
        first = false;
        if (k_winner[i] == kDense)
            tag << "dense";
        else
            tag << k_winner[i];
    }
    switch (dropout) {
        case DropoutMode::kNone: tag << "_nodrop"; break;
        case DropoutMode::kHeterogeneous: tag << "_hd"; break;
        case DropoutMode::kRandom: tag << "_rd"; break;
    }
    if (dropout != DropoutMode::kNone) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", alpha);
        tag << buf;
    }
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "_e%g", eps_th);
        tag << buf;
    }
    return tag.str();
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("config: JSON parse failure: ") + e.what());
    }
    if (!j.is_object()) throw Error("config: top level must be a JSON object");

    static const std::set<std::string> known = {
        "benchmark", "T", "hidden", "k", "dropout", "alpha", "eps_th", "lr", "epochs",
        "batch_size", "n_samples", "mask_per_sample", "gpm_threshold", "seeds", "data_dir",
        "out_dir", "sr_n_per_class", "sr_noise_sigma", "sr_theta_min", "sr_theta_max",
        "pm_train_per_task", "pm_val_size", "pm_test_per_task", "mnist_train_images",
        "mnist_train_labels", "mnist_test_images", "mnist_test_labels", "alpha_auto"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw Error("config: unknown key \"" + it.key() + "\"");

    ExperimentConfig c;
    if (j.contains("benchmark")) {
        const std::string b = j["benchmark"].get<std::string>();
        if (b == "swissroll")
            c.benchmark = Benchmark::kSwissRoll;
        else if (b == "permuted_mnist")
            c.benchmark = Benchmark::kPermutedMnist;
        else
            throw Error("config: unknown benchmark \"" + b + "\"");
    }
    if (j.contains("T")) c.task_count = to_count(j["T"], "T");
    if (j.contains("hidden")) {
        c.hidden.clear();
        for (const auto& v : j["hidden"]) c.hidden.push_back(to_count(v, "hidden"));
    }
    // k: "dense", a single count, or one entry per hidden layer.
    c.k_winner.assign(c.hidden.size(), kDense);
    if (j.contains("k")) {
        const json& k = j["k"];
        auto one = [&](const json& v) -> std::size_t {
            if (v.is_string()) {
                if (v.get<std::string>() != "dense")
                    throw Error("config: k entries must be counts or \"dense\"");
                return kDense;
            }
            std::size_t n = to_count(v, "k");
            if (n == 0) throw Error("config: k must be >= 1 (use \"dense\" for no selection)");
            return n;
        };
        if (k.is_array()) {
            if (k.size() != c.hidden.size())
                throw Error("config: k array must match hidden layer count");
            for (std::size_t i = 0; i < k.size(); ++i) c.k_winner[i] = one(k[i]);
        } else {
            std::fill(c.k_winner.begin(), c.k_winner.end(), one(k));
        }
    }
    if (j.contains("dropout")) {
        const std::string d = j["dropout"].get<std::string>();
        if (d == "none")
            c.dropout = DropoutMode::kNone;
        else if (d == "heterogeneous")
            c.dropout = DropoutMode::kHeterogeneous;
        else if (d == "random")
            c.dropout = DropoutMode::kRandom;
        else
            throw Error("config: unknown dropout mode \"" + d + "\"");
    }
    if (j.contains("alpha")) {
        const json& a = j["alpha"];
        if (a.is_string()) {
            if (a.get<std::string>() != "auto")
                throw Error("config: alpha must be a number or \"auto\"");
            c.alpha_auto = true;
        } else {
            c.alpha = to_real(a, "alpha");
        }
    }
    if (j.contains("alpha_auto")) c.alpha_auto = j["alpha_auto"].get<bool>();
    if (c.alpha_auto) {
        // alpha = 24/k with the smallest non-dense k across layers.
        std::size_t kmin = 0;
        for (std::size_t k : c.k_winner)
            if (k != kDense && (kmin == 0 || k < kmin)) kmin = k;
        if (kmin == 0) throw Error("config: alpha \"auto\" requires k-winner activations");
        c.alpha = 24.0 / static_cast<double>(kmin);
    }
    if (j.contains("eps_th")) c.eps_th = to_real(j["eps_th"], "eps_th");
    if (j.contains("lr")) c.learning_rate = to_real(j["lr"], "lr");
    if (j.contains("epochs")) c.epochs = to_count(j["epochs"], "epochs");
    if (j.contains("batch_size")) c.batch_size = to_count(j["batch_size"], "batch_size");
    if (j.contains("n_samples")) c.n_samples = to_count(j["n_samples"], "n_samples");
    if (j.contains("mask_per_sample")) c.mask_per_sample = j["mask_per_sample"].get<bool>();
    if (j.contains("gpm_threshold")) {
        const std::string g = j["gpm_threshold"].get<std::string>();
        if (g == "joint")
            c.gpm_threshold = GpmThreshold::kJoint;
        else if (g == "residual")
            c.gpm_threshold = GpmThreshold::kResidual;
        else
            throw Error("config: unknown gpm_threshold \"" + g + "\"");
    }
    if (j.contains("seeds")) {
        c.seeds.clear();
        for (const auto& v : j["seeds"]) c.seeds.push_back(v.get<std::uint64_t>());
    }
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("sr_n_per_class")) c.sr_n_per_class = to_count(j["sr_n_per_class"], "sr_n_per_class");
    if (j.contains("sr_noise_sigma")) c.sr_noise_sigma = to_real(j["sr_noise_sigma"], "sr_noise_sigma");
    if (j.contains("sr_theta_min")) c.sr_theta_min = to_real(j["sr_theta_min"], "sr_theta_min");
    if (j.contains("sr_theta_max")) c.sr_theta_max = to_real(j["sr_theta_max"], "sr_theta_max");
    if (j.contains("pm_train_per_task")) c.pm_train_per_task = to_count(j["pm_train_per_task"], "pm_train_per_task");
    if (j.contains("pm_val_size")) c.pm_val_size = to_count(j["pm_val_size"], "pm_val_size");
    if (j.contains("pm_test_per_task")) c.pm_test_per_task = to_count(j["pm_test_per_task"], "pm_test_per_task");
    if (j.contains("mnist_train_images")) c.mnist_files.train_images = j["mnist_train_images"].get<std::string>();
    if (j.contains("mnist_train_labels")) c.mnist_files.train_labels = j["mnist_train_labels"].get<std::string>();
    if (j.contains("mnist_test_images")) c.mnist_files.test_images = j["mnist_test_images"].get<std::string>();
    if (j.contains("mnist_test_labels")) c.mnist_files.test_labels = j["mnist_test_labels"].get<std::string>();

    c.validate();
    return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace sgpm
