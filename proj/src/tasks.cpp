#include "sgpm/tasks.hpp"

#include "sgpm/error.hpp"
#include "sgpm/rng.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sgpm {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

struct SpiralPoint {
    double x, y;
    int label;
    double theta;
};

// Noiseless point: class 0 at angle theta with radius theta/theta_max,
// class 1 rotated by pi at the same radius.
SpiralPoint spiral_point(double theta, int label, const SwissRollParams& p) {
    const double r = theta / p.theta_max;
    const double a = theta + (label == 1 ? 3.14159265358979323846 : 0.0);
    return {r * std::cos(a), r * std::sin(a), label, theta};
}

LabeledDataset make_split(const std::vector<SpiralPoint>& pts, Split split, double sigma,
                          Rng& rng) {
    LabeledDataset d;
    d.split = split;
    d.inputs = DenseMatrix(2, pts.size());
    d.labels.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        d.inputs(0, i) = pts[i].x + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
        d.inputs(1, i) = pts[i].y + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
        d.labels[i] = pts[i].label;
    }
    return d;
}

} // namespace

TaskStream gen_swiss_roll(std::size_t T, std::size_t n_per_class, double noise_sigma,
                          std::uint64_t seed, const SwissRollParams& params) {
    if (T < 1) throw Error("gen_swiss_roll: T must be >= 1");
    if (n_per_class < 4) throw Error("gen_swiss_roll: need at least 4 points per class");
    if (noise_sigma < 0.0) throw Error("gen_swiss_roll: noise_sigma must be >= 0");

    const std::size_t n_val =
        params.n_val_per_class ? params.n_val_per_class : (n_per_class + 1) / 2;
    const std::size_t n_test =
        params.n_test_per_class ? params.n_test_per_class : (n_per_class + 1) / 2;

    TaskStream stream;
    stream.class_count = 2;
    const double arc = (params.theta_max - params.theta_min) / static_cast<double>(T);

    Rng rng = Rng::derive(seed, 0x5357495353ULL);
    for (std::size_t t = 0; t < T; ++t) {
        const double lo = params.theta_min + arc * static_cast<double>(t);
        const double hi = lo + arc;
        auto draw = [&](std::size_t count) {
            std::vector<SpiralPoint> pts;
            pts.reserve(2 * count);
            for (int label = 0; label < 2; ++label)
                for (std::size_t i = 0; i < count; ++i)
                    pts.push_back(spiral_point(rng.uniform(lo, hi), label, params));
            return pts;
        };
        TaskData task;
        task.train = make_split(draw(n_per_class), Split::kTrain, noise_sigma, rng);
        task.val = make_split(draw(n_val), Split::kVal, noise_sigma, rng);
        task.test = make_split(draw(n_test), Split::kTest, noise_sigma, rng);
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

std::string swiss_roll_csv(const TaskStream& stream) {
    std::ostringstream out;
    out << "x1,x2,label,task,split\n";
    char buf[64];
    auto emit = [&](const LabeledDataset& d, std::size_t task, const char* split) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", d.inputs(0, i), d.inputs(1, i));
            out << buf << ',' << d.labels[i] << ',' << task + 1 << ',' << split << '\n';
        }
    };
    for (std::size_t t = 0; t < stream.task_count(); ++t) {
        emit(stream.tasks[t].train, t, "train");
        emit(stream.tasks[t].val, t, "val");
        emit(stream.tasks[t].test, t, "test");
    }
    return out.str();
}

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

} // namespace

IdxData parse_idx(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw Error("parse_idx: truncated header at offset 0");
    const std::uint32_t magic = read_be32(bytes, 0);
    std::size_t ndims;
    if (magic == kIdxLabels)
        ndims = 1;
    else if (magic == kIdxImages)
        ndims = 3;
    else {
        char buf[48];
        std::snprintf(buf, sizeof buf, "parse_idx: bad magic 0x%08x at offset 0", magic);
        throw Error(buf);
    }

    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header)
        throw Error("parse_idx: truncated dimension header, need " + std::to_string(header) +
                    " bytes, have " + std::to_string(bytes.size()));

    IdxData out;
    out.magic = magic;
    std::size_t payload = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        const std::size_t n = read_be32(bytes, 4 + 4 * d);
        out.dims.push_back(n);
        payload *= n;
    }
    if (bytes.size() != header + payload)
        throw Error("parse_idx: payload length mismatch at offset " + std::to_string(header) +
                    ": expected " + std::to_string(payload) + " bytes, got " +
                    std::to_string(bytes.size() - header));

    out.data.resize(payload);
    const double scale = magic == kIdxImages ? 1.0 / 255.0 : 1.0;
    for (std::size_t i = 0; i < payload; ++i)
        out.data[i] = static_cast<double>(bytes[header + i]) * scale;
    return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in, const std::string& name) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw Error("gunzip: inflateInit failed for " + name);
    std::vector<std::uint8_t> out;
    out.reserve(in.size() * 4);
    std::uint8_t buf[1 << 16];
    zs.next_in = const_cast<std::uint8_t*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw Error("gunzip: corrupt stream in " + name + " (zlib rc " + std::to_string(rc) +
                        ")");
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

bool file_exists(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return static_cast<bool>(in);
}

} // namespace

IdxData load_idx_file(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) bytes = gunzip(bytes, path);
    try {
        return parse_idx(bytes);
    } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (" + path + ")");
    }
}

MnistData load_mnist(const std::string& dir, const MnistFileNames& names) {
    auto resolve = [&](const std::string& name) {
        const std::string plain = dir + "/" + name;
        if (file_exists(plain)) return plain;
        const std::string gz = plain + ".gz";
        if (file_exists(gz)) return gz;
        throw Error("load_mnist: missing " + plain + " (also tried .gz)");
    };

    auto to_images = [](const IdxData& idx) {
        if (idx.magic != kIdxImages || idx.dims.size() != 3)
            throw Error("load_mnist: expected an image file");
        const std::size_t n = idx.dims[0];
        const std::size_t px = idx.dims[1] * idx.dims[2];
        DenseMatrix m(px, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < px; ++p)
                m(p, i) = idx.data[i * px + p];
        return m;
    };
    auto to_labels = [](const IdxData& idx) {
        if (idx.magic != kIdxLabels) throw Error("load_mnist: expected a label file");
        std::vector<int> labels(idx.data.size());
        for (std::size_t i = 0; i < labels.size(); ++i)
            labels[i] = static_cast<int>(idx.data[i]);
        return labels;
    };

    MnistData d;
    d.train_images = to_images(load_idx_file(resolve(names.train_images)));
    d.train_labels = to_labels(load_idx_file(resolve(names.train_labels)));
    d.test_images = to_images(load_idx_file(resolve(names.test_images)));
    d.test_labels = to_labels(load_idx_file(resolve(names.test_labels)));
    if (d.train_images.cols() != d.train_labels.size() ||
        d.test_images.cols() != d.test_labels.size())
        throw Error("load_mnist: image/label count mismatch");
    return d;
}

namespace {

DenseMatrix permute_rows(const DenseMatrix& src, const std::vector<std::uint32_t>& perm) {
    DenseMatrix out(src.rows(), src.cols());
    for (std::size_t r = 0; r < src.rows(); ++r) {
        const double* from = src.row(perm[r]);
        double* to = out.row(r);
        std::copy(from, from + src.cols(), to);
    }
    return out;
}

// Round-robin over per-class index pools: class counts deviate by at most 1.
std::vector<std::size_t> stratified_pick(const std::vector<int>& labels,
                                         const std::vector<std::size_t>& pool, std::size_t want,
                                         std::size_t class_count, Rng& rng) {
    std::vector<std::vector<std::size_t>> by_class(class_count);
    for (std::size_t i : pool) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    for (auto& v : by_class) rng.shuffle(v);

    std::vector<std::size_t> picked;
    picked.reserve(want);
    std::size_t round = 0;
    while (picked.size() < want) {
        bool any = false;
        for (std::size_t c = 0; c < class_count && picked.size() < want; ++c) {
            if (round < by_class[c].size()) {
                picked.push_back(by_class[c][round]);
                any = true;
            }
        }
        if (!any) break;   // pools exhausted
        ++round;
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

LabeledDataset gather(const DenseMatrix& images, const std::vector<int>& labels,
                      const std::vector<std::size_t>& idx, Split split) {
    LabeledDataset d;
    d.split = split;
    d.inputs = DenseMatrix(images.rows(), idx.size());
    d.labels.resize(idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) {
        for (std::size_t r = 0; r < images.rows(); ++r) d.inputs(r, c) = images(r, idx[c]);
        d.labels[c] = labels[idx[c]];
    }
    return d;
}

} // namespace

TaskStream permuted_mnist_stream(const MnistData& mnist, std::size_t T,
                                 std::size_t train_per_task, std::uint64_t seed,
                                 const PermutedMnistParams& params) {
    if (T < 1) throw Error("permuted_mnist_stream: T must be >= 1");
    const std::size_t n_train = mnist.train_images.cols();
    if (params.val_size >= n_train)
        throw Error("permuted_mnist_stream: validation split swallows the training set");
    const std::size_t pool_size = n_train - params.val_size;
    const std::size_t px = mnist.train_images.rows();

    constexpr std::size_t kClasses = 10;
    TaskStream stream;
    stream.class_count = kClasses;

    std::vector<std::size_t> pool(pool_size);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> val_idx(params.val_size);
    std::iota(val_idx.begin(), val_idx.end(), pool_size);

    std::vector<std::size_t> test_idx;
    if (params.test_per_task == 0 || params.test_per_task >= mnist.test_images.cols()) {
        test_idx.resize(mnist.test_images.cols());
        std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
    } else {
        std::vector<std::size_t> all(mnist.test_images.cols());
        std::iota(all.begin(), all.end(), std::size_t{0});
        Rng test_rng = Rng::derive(seed, 0x54455354ULL);
        test_idx = stratified_pick(mnist.test_labels, all, params.test_per_task, kClasses,
                                   test_rng);
    }

    Rng perm_rng = Rng::derive(seed, 0x5045524dULL);
    Rng pick_rng = Rng::derive(seed, 0x5049434bULL);

    for (std::size_t t = 0; t < T; ++t) {
        std::vector<std::uint32_t> perm(px);
        std::iota(perm.begin(), perm.end(), std::uint32_t{0});
        if (t > 0) perm_rng.shuffle(perm);   // task 1 keeps the identity

        std::vector<std::size_t> train_idx =
            train_per_task >= pool_size
                ? pool
                : stratified_pick(mnist.train_labels, pool, train_per_task, kClasses, pick_rng);

        TaskData task;
        task.train = gather(mnist.train_images, mnist.train_labels, train_idx, Split::kTrain);
        task.val = gather(mnist.train_images, mnist.train_labels, val_idx, Split::kVal);
        task.test = gather(mnist.test_images, mnist.test_labels, test_idx, Split::kTest);
        if (t > 0) {
            task.train.inputs = permute_rows(task.train.inputs, perm);
            task.val.inputs = permute_rows(task.val.inputs, perm);
            task.test.inputs = permute_rows(task.test.inputs, perm);
        }
        stream.permutations.push_back(std::move(perm));
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

} // namespace sgpm
