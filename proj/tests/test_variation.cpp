#include <catch2/catch_amalgamated.hpp>

#include <skillbench/repertoire.hpp>
#include <skillbench/variation.hpp>

#include <cmath>

using namespace skillbench;

namespace {

BoxN unit_square()
{
    BoxN b;
    b.lo = Vec::Zero(2);
    b.hi = Vec::Ones(2);
    return b;
}

} // namespace

TEST_CASE("select_uniform: single occupied cell and empty repertoire")
{
    const BoxN box = unit_square();
    CvtRepertoire rep(build_cvt_centroids(16, box, 1), box);
    Rng rng(1);
    CHECK_THROWS(select_uniform(rep, 4, rng));

    auto spec = make_spec({2, 2}, Activation::Tanh, OutputHead::Linear);
    Genotype g{spec, Vec::Constant(6, 0.5)};
    Vec d(2);
    d << 0.2, 0.2;
    rep.insert(g, 1.0, d);
    const auto sel = select_uniform(rep, 10, rng);
    for (int c : sel)
        CHECK(rep.cell(c)->genotype.params[0] == 0.5);
}

TEST_CASE("select_uniform: two cells drawn evenly, deterministic per stream")
{
    const BoxN box = unit_square();
    CvtRepertoire rep(build_cvt_centroids(2, box, 1), box);
    auto spec = make_spec({2, 2}, Activation::Tanh, OutputHead::Linear);
    Genotype g{spec, Vec::Zero(6)};
    rep.insert(g, 1.0, rep.centroids().row(0).transpose());
    rep.insert(g, 2.0, rep.centroids().row(1).transpose());

    Rng rng(99);
    const int n = 100000;
    const auto sel = select_uniform(rep, n, rng);
    int count0 = 0;
    for (int c : sel)
        count0 += c == rep.occupied_cells()[0] ? 1 : 0;
    const double freq = static_cast<double>(count0) / n;
    const double se = std::sqrt(0.25 / n);
    CHECK(std::abs(freq - 0.5) < 3.0 * se);

    Rng rng2(99);
    CHECK(select_uniform(rep, n, rng2) == sel);
}

TEST_CASE("iso_line_dd: zero sigmas reproduce parent exactly")
{
    Rng rng(2);
    auto spec = make_spec({2, 8, 2}, Activation::Tanh, OutputHead::Linear);
    Genotype x1 = init_genotype(spec, rng);
    Genotype x2 = init_genotype(spec, rng);
    VariationConfig cfg;
    cfg.sigma_iso = 0.0;
    cfg.sigma_line = 0.0;
    const Genotype child = iso_line_dd(x1, x2, cfg, rng);
    CHECK(child.params == x1.params);
}

TEST_CASE("iso_line_dd: spec mismatch rejected")
{
    Rng rng(3);
    Genotype a = init_genotype(make_spec({2, 4, 2}, Activation::Tanh, OutputHead::Linear), rng);
    Genotype b = init_genotype(make_spec({2, 6, 2}, Activation::Tanh, OutputHead::Linear), rng);
    VariationConfig cfg;
    CHECK_THROWS(iso_line_dd(a, b, cfg, rng));
}

TEST_CASE("iso_line_dd: identical parents give isotropic noise of std sigma_iso")
{
    Rng rng(5);
    auto spec = make_spec({2, 2}, Activation::Tanh, OutputHead::Linear); // 6 params
    Genotype x = init_genotype(spec, rng);
    VariationConfig cfg;
    cfg.sigma_iso = 0.005;
    cfg.sigma_line = 0.05;
    const int n = 100000;
    Vec sum = Vec::Zero(6), sumsq = Vec::Zero(6);
    for (int i = 0; i < n; ++i) {
        Rng child_rng = rng.derive(rng_tag::kVariation, static_cast<std::uint64_t>(i));
        const Genotype c = iso_line_dd(x, x, cfg, child_rng);
        const Vec d = c.params - x.params;
        sum += d;
        sumsq += d.cwiseProduct(d);
    }
    for (Eigen::Index j = 0; j < 6; ++j) {
        const double mean = sum[j] / n;
        const double var = sumsq[j] / n - mean * mean;
        const double sd = std::sqrt(var);
        CHECK(std::abs(sd - cfg.sigma_iso) < 0.02 * cfg.sigma_iso);
        const double se_mean = cfg.sigma_iso / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mean) < 3.0 * se_mean);
    }
}

TEST_CASE("iso_line_dd: per-coordinate variance includes the line term")
{
    Rng rng(8);
    auto spec = make_spec({2, 2}, Activation::Tanh, OutputHead::Linear);
    Genotype x1 = init_genotype(spec, rng);
    Genotype x2 = init_genotype(spec, rng);
    VariationConfig cfg;
    cfg.sigma_iso = 0.01;
    cfg.sigma_line = 0.2;
    const int n = 100000;
    Vec sum = Vec::Zero(6), sumsq = Vec::Zero(6);
    for (int i = 0; i < n; ++i) {
        Rng child_rng = rng.derive(rng_tag::kVariation, static_cast<std::uint64_t>(i));
        const Genotype c = iso_line_dd(x1, x2, cfg, child_rng);
        const Vec d = c.params - x1.params;
        sum += d;
        sumsq += d.cwiseProduct(d);
    }
    for (Eigen::Index j = 0; j < 6; ++j) {
        const double mean = sum[j] / n;
        const double var = sumsq[j] / n - mean * mean;
        const double diff = x2.params[j] - x1.params[j];
        const double expected = cfg.sigma_iso * cfg.sigma_iso + cfg.sigma_line * cfg.sigma_line * diff * diff;
        CHECK(std::abs(var - expected) < 0.05 * expected);
        const double se_mean = std::sqrt(expected / n);
        CHECK(std::abs(mean) < 3.5 * se_mean);
    }
}
