#include "sgpm/checkpoint.hpp"

#include "sgpm/error.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace sgpm {

namespace {

constexpr char kMagic[4] = {'G', 'P', 'M', 'C'};

// Little-endian byte writer.
struct Writer {
    std::string buf;

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64s(const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
    void str(const std::string& s) {
        u64(s.size());
        buf.append(s);
    }
    void matrix(const DenseMatrix& m) {
        u64(m.rows());
        u64(m.cols());
        f64s(m.data(), m.size());
    }
};

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::size_t limit;

    Reader(const std::string& b, std::size_t start, std::size_t end)
        : buf(b), pos(start), limit(end) {}

    void need(std::size_t n, const char* what) {
        if (pos + n > limit)
            throw Error("checkpoint: truncated " + std::string(what) + " at offset " +
                        std::to_string(pos));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= std::uint64_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(const char* what) {
        std::uint64_t n = u64(what);
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    DenseMatrix matrix(const char* what) {
        std::uint64_t rows = u64(what);
        std::uint64_t cols = u64(what);
        const std::uint64_t room = (limit - pos) / 8;
        if (rows > (1ULL << 31) || cols > (1ULL << 31) || (rows != 0 && cols > room / rows))
            throw Error("checkpoint: implausible matrix shape in " + std::string(what) +
                        " at offset " + std::to_string(pos));
        DenseMatrix m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = f64(what);
        return m;
    }
};

void write_rng(Writer& w, const std::array<std::uint64_t, 4>& s) {
    for (std::uint64_t v : s) w.u64(v);
}

std::array<std::uint64_t, 4> read_rng(Reader& r, const char* what) {
    std::array<std::uint64_t, 4> s{};
    for (auto& v : s) v = r.u64(what);
    return s;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    Writer model, gpm, dropout, rng, progress;

    model.u64(ckpt.model.k_winner.size());
    for (std::size_t k : ckpt.model.k_winner) model.u64(k);
    model.u64(ckpt.model.layers.size());
    for (const auto& layer : ckpt.model.layers) model.matrix(layer.weights);

    gpm.f64(ckpt.memory.eps_th);
    gpm.u64(ckpt.memory.n_samples);
    gpm.u64(ckpt.memory.bases.size());
    for (const auto& b : ckpt.memory.bases) gpm.matrix(b);

    dropout.f64(ckpt.dropout.alpha);
    dropout.u64(ckpt.dropout.rng_seed);
    dropout.u64(ckpt.dropout.counters.size());
    for (std::size_t l = 0; l < ckpt.dropout.counters.size(); ++l) {
        dropout.u64(ckpt.dropout.counters[l].size());
        for (std::uint64_t c : ckpt.dropout.counters[l]) dropout.u64(c);
        for (double p : ckpt.dropout.retention[l]) dropout.f64(p);
    }

    write_rng(rng, ckpt.train_rng);
    write_rng(rng, ckpt.mask_rng);
    write_rng(rng, ckpt.gpm_rng);

    progress.u64(ckpt.completed_tasks);
    progress.u64(ckpt.seed);
    progress.u64(ckpt.accuracy.task_count());
    for (std::size_t t = 0; t < ckpt.completed_tasks; ++t) {
        const auto& row = ckpt.accuracy.rows()[t];
        progress.u64(row.size());
        progress.f64s(row.data(), row.size());
    }
    progress.u64(ckpt.nu_history.size());
    for (const auto& task_nu : ckpt.nu_history) {
        progress.u64(task_nu.size());
        for (const auto& layer_nu : task_nu) {
            progress.u64(layer_nu.size());
            progress.f64s(layer_nu.data(), layer_nu.size());
        }
    }
    progress.str(ckpt.config_echo);

    Writer out;
    out.buf.append(kMagic, 4);
    out.u32(Checkpoint::kVersion);
    for (Writer* section : {&model, &gpm, &dropout, &rng, &progress}) {
        out.u64(section->buf.size());
        out.buf.append(section->buf);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("checkpoint: cannot open " + tmp + " for writing");
        f.write(out.buf.data(), static_cast<std::streamsize>(out.buf.size()));
        if (!f) throw Error("checkpoint: short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error("checkpoint: cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw Error("checkpoint: bad magic at offset 0 in " + path);
    Reader head(buf, 4, buf.size());
    const std::uint32_t version = head.u32("version");
    if (version != Checkpoint::kVersion)
        throw Error("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(Checkpoint::kVersion) + ")");

    // Slice the five sections by their length prefixes.
    std::size_t pos = head.pos;
    std::array<std::pair<std::size_t, std::size_t>, 5> sections;
    for (auto& sec : sections) {
        Reader len(buf, pos, buf.size());
        std::uint64_t n = len.u64("section length");
        pos = len.pos;
        if (pos + n > buf.size())
            throw Error("checkpoint: section overruns file at offset " + std::to_string(pos) +
                        " (length " + std::to_string(n) + ")");
        sec = {pos, pos + n};
        pos += n;
    }
    if (pos != buf.size())
        throw Error("checkpoint: " + std::to_string(buf.size() - pos) +
                    " trailing bytes at offset " + std::to_string(pos));

    Checkpoint ckpt;
    {
        Reader r(buf, sections[0].first, sections[0].second);
        std::uint64_t H = r.u64("k-winner count");
        ckpt.model.k_winner.resize(H);
        for (auto& k : ckpt.model.k_winner) k = r.u64("k-winner");
        std::uint64_t L = r.u64("layer count");
        if (L != H + 1)
            throw Error("checkpoint: layer count " + std::to_string(L) +
                        " inconsistent with hidden count " + std::to_string(H));
        for (std::uint64_t l = 0; l < L; ++l)
            ckpt.model.layers.push_back({r.matrix("model weights")});
    }
    {
        Reader r(buf, sections[1].first, sections[1].second);
        ckpt.memory.eps_th = r.f64("eps_th");
        ckpt.memory.n_samples = r.u64("n_samples");
        std::uint64_t L = r.u64("basis count");
        for (std::uint64_t l = 0; l < L; ++l)
            ckpt.memory.bases.push_back(r.matrix("gpm basis"));
    }
    {
        Reader r(buf, sections[2].first, sections[2].second);
        ckpt.dropout.alpha = r.f64("alpha");
        ckpt.dropout.rng_seed = r.u64("dropout seed");
        std::uint64_t H = r.u64("dropout layer count");
        for (std::uint64_t l = 0; l < H; ++l) {
            std::uint64_t w = r.u64("layer width");
            std::vector<std::uint64_t> counters(w);
            for (auto& c : counters) c = r.u64("counter");
            std::vector<double> retention(w);
            for (auto& p : retention) p = r.f64("retention");
            ckpt.dropout.counters.push_back(std::move(counters));
            ckpt.dropout.retention.push_back(std::move(retention));
        }
    }
    {
        Reader r(buf, sections[3].first, sections[3].second);
        ckpt.train_rng = read_rng(r, "train rng");
        ckpt.mask_rng = read_rng(r, "mask rng");
        ckpt.gpm_rng = read_rng(r, "gpm rng");
    }
    {
        Reader r(buf, sections[4].first, sections[4].second);
        ckpt.completed_tasks = r.u64("completed tasks");
        ckpt.seed = r.u64("seed");
        std::uint64_t T = r.u64("task count");
        if (ckpt.completed_tasks > T)
            throw Error("checkpoint: completed tasks exceed task count");
        ckpt.accuracy = AccuracyMatrix(T);
        for (std::uint64_t t = 0; t < ckpt.completed_tasks; ++t) {
            std::uint64_t n = r.u64("accuracy row length");
            if (n != t + 1) throw Error("checkpoint: accuracy row " + std::to_string(t + 1) +
                                        " has wrong length");
            std::vector<double> row(n);
            for (auto& a : row) a = r.f64("accuracy");
            ckpt.accuracy.set_row(t, std::move(row));
        }
        std::uint64_t n_nu = r.u64("nu history length");
        for (std::uint64_t t = 0; t < n_nu; ++t) {
            std::uint64_t H = r.u64("nu layer count");
            std::vector<std::vector<double>> task_nu;
            for (std::uint64_t l = 0; l < H; ++l) {
                std::uint64_t w = r.u64("nu width");
                std::vector<double> nu(w);
                for (auto& v : nu) v = r.f64("nu");
                task_nu.push_back(std::move(nu));
            }
            ckpt.nu_history.push_back(std::move(task_nu));
        }
        ckpt.config_echo = r.str("config echo");
        if (r.pos != r.limit)
            throw Error("checkpoint: trailing bytes in progress section at offset " +
                        std::to_string(r.pos));
    }
    return ckpt;
}

} // namespace sgpm
