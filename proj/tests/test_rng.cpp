#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sgpm/rng.hpp"

#include <set>

using namespace sgpm;

TEST_CASE("identical seeds give identical streams") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("state round trip resumes the stream exactly") {
    Rng a(9);
    for (int i = 0; i < 17; ++i) a.next_u64();
    auto snap = a.state();
    std::vector<std::uint64_t> expect;
    for (int i = 0; i < 50; ++i) expect.push_back(a.next_u64());
    Rng b(0);
    b.set_state(snap);
    for (int i = 0; i < 50; ++i) CHECK(b.next_u64() == expect[i]);
}

TEST_CASE("derived streams differ from each other and the base") {
    Rng base(5);
    Rng s1 = Rng::derive(5, 1);
    Rng s2 = Rng::derive(5, 2);
    std::set<std::uint64_t> firsts{base.next_u64(), s1.next_u64(), s2.next_u64()};
    CHECK(firsts.size() == 3);
}

TEST_CASE("uniform01 lies in [0,1) and fills the range") {
    Rng rng(33);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("below is unbiased over a small modulus") {
    Rng rng(77);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[rng.below(5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("normal has roughly standard moments") {
    Rng rng(101);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.normal();
        sum += g;
        sq += g * g;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("sample_without_replacement yields distinct indices") {
    Rng rng(55);
    auto s = rng.sample_without_replacement(100, 30);
    CHECK(s.size() == 30);
    std::set<std::size_t> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 30);
    for (std::size_t v : s) CHECK(v < 100);

    auto all = rng.sample_without_replacement(10, 50);
    CHECK(all.size() == 10);
}
