#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <skillbench/net.hpp>
#include <skillbench/repertoire.hpp>
#include <skillbench/rng.hpp>
#include <skillbench/types.hpp>
#include <skillbench/unstructured_archive.hpp>

namespace skillbench {

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian; big-endian hosts are unsupported");

class BinWriter {
public:
    explicit BinWriter(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void i64(std::int64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }

    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void vec(const Vec& v)
    {
        u64(static_cast<std::uint64_t>(v.size()));
        raw(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
    }

    void mat(const Mat& m)
    {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    }

    void vec_f32(const Vec& v)
    {
        u64(static_cast<std::uint64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            f32(static_cast<float>(v[i]));
    }

    void raw(const void* data, std::size_t n) { os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

private:
    std::ostream& os_;
};

class BinReader {
public:
    explicit BinReader(std::istream& is) : is_(is) {}

    std::uint8_t u8() { return get<std::uint8_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int32_t i32() { return get<std::int32_t>(); }
    std::int64_t i64() { return get<std::int64_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }

    std::string str()
    {
        const auto n = u32();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    Vec vec()
    {
        const auto n = static_cast<Eigen::Index>(u64());
        Vec v(n);
        raw(v.data(), static_cast<std::size_t>(n) * sizeof(double));
        return v;
    }

    Mat mat()
    {
        const auto r = static_cast<Eigen::Index>(u64());
        const auto c = static_cast<Eigen::Index>(u64());
        Mat m(r, c);
        raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
        return m;
    }

    Vec vec_f32()
    {
        const auto n = static_cast<Eigen::Index>(u64());
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v[i] = static_cast<double>(f32());
        return v;
    }

    void raw(void* data, std::size_t n)
    {
        is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (!is_)
            throw std::runtime_error("BinReader: truncated stream");
    }

private:
    template <typename T>
    T get()
    {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    std::istream& is_;
};

inline void write_netspec(BinWriter& w, const NetSpec& spec)
{
    w.u32(static_cast<std::uint32_t>(spec.layer_sizes.size()));
    for (int s : spec.layer_sizes)
        w.i32(s);
    w.u8(static_cast<std::uint8_t>(spec.hidden_act));
    w.u8(static_cast<std::uint8_t>(spec.head));
}

inline std::shared_ptr<const NetSpec> read_netspec(BinReader& r)
{
    NetSpec spec;
    const auto n = r.u32();
    spec.layer_sizes.resize(n);
    for (auto& s : spec.layer_sizes)
        s = r.i32();
    spec.hidden_act = static_cast<Activation>(r.u8());
    spec.head = static_cast<OutputHead>(r.u8());
    spec.validate();
    return std::make_shared<const NetSpec>(std::move(spec));
}

// Portable genotype record: self-describing net spec, spec hash, then the
// parameter vector as little-endian float32.
inline void write_genotype_portable(BinWriter& w, const Genotype& g)
{
    write_netspec(w, *g.spec);
    w.u64(g.spec->hash());
    w.vec_f32(g.params);
}

inline Genotype read_genotype_portable(BinReader& r)
{
    Genotype g;
    g.spec = read_netspec(r);
    const auto hash = r.u64();
    if (hash != g.spec->hash())
        throw std::runtime_error("genotype record: spec hash mismatch");
    g.params = r.vec_f32();
    if (g.params.size() != static_cast<Eigen::Index>(g.spec->param_count()))
        throw std::runtime_error("genotype record: parameter count mismatch");
    return g;
}

// Exact (float64) genotype record for resumable checkpoints.
inline void write_genotype_exact(BinWriter& w, const Genotype& g)
{
    write_netspec(w, *g.spec);
    w.u64(g.spec->hash());
    w.vec(g.params);
}

inline Genotype read_genotype_exact(BinReader& r)
{
    Genotype g;
    g.spec = read_netspec(r);
    const auto hash = r.u64();
    if (hash != g.spec->hash())
        throw std::runtime_error("genotype record: spec hash mismatch");
    g.params = r.vec();
    return g;
}

inline void write_adam(BinWriter& w, const AdamState& a)
{
    w.i64(a.step);
    w.vec(a.m);
    w.vec(a.v);
    w.f64(a.lr);
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
}

inline AdamState read_adam(BinReader& r)
{
    AdamState a;
    a.step = r.i64();
    a.m = r.vec();
    a.v = r.vec();
    a.lr = r.f64();
    a.beta1 = r.f64();
    a.beta2 = r.f64();
    a.eps = r.f64();
    return a;
}

inline void write_rng(BinWriter& w, const Rng& rng)
{
    w.u64(rng.stream_seed());
    w.u64(rng.raw_state());
    w.u8(rng.has_cached_normal() ? 1 : 0);
    w.f64(rng.cached_normal());
}

inline Rng read_rng(BinReader& r)
{
    const auto seed = r.u64();
    const auto state = r.u64();
    const bool cached = r.u8() != 0;
    const double val = r.f64();
    return Rng::restore(seed, state, cached, val);
}

inline constexpr std::uint32_t kRepertoireMagic = 0x53524250; // "PBRS"
inline constexpr std::uint32_t kFormatVersion = 1;

/// Repertoire file: header (env id, bounds, centroids), then per-cell
/// records. Genotypes use the portable float32 encoding; fitness and
/// descriptors stay exact so metrics round-trip bit-for-bit.
inline void write_repertoire(std::ostream& os, const CvtRepertoire& rep, const std::string& env_id)
{
    BinWriter w(os);
    w.u32(kRepertoireMagic);
    w.u32(kFormatVersion);
    w.str(env_id);
    w.vec(rep.bounds().lo);
    w.vec(rep.bounds().hi);
    w.mat(rep.centroids());
    w.u64(rep.clip_events());
    for (int c = 0; c < rep.num_cells(); ++c) {
        const auto& cell = rep.cell(c);
        w.u8(cell ? 1 : 0);
        if (cell) {
            w.f64(cell->fitness);
            w.vec(cell->descriptor);
            write_genotype_portable(w, cell->genotype);
        }
    }
}

struct LoadedRepertoire {
    CvtRepertoire repertoire;
    std::string env_id;
};

inline LoadedRepertoire read_repertoire(std::istream& is)
{
    BinReader r(is);
    if (r.u32() != kRepertoireMagic)
        throw std::runtime_error("not a repertoire file");
    if (r.u32() != kFormatVersion)
        throw std::runtime_error("unsupported repertoire version");
    LoadedRepertoire out;
    out.env_id = r.str();
    BoxN bounds;
    bounds.lo = r.vec();
    bounds.hi = r.vec();
    Mat centroids = r.mat();
    out.repertoire = CvtRepertoire(std::move(centroids), std::move(bounds));
    out.repertoire.set_clip_events(r.u64());
    for (int c = 0; c < out.repertoire.num_cells(); ++c) {
        if (r.u8() == 0)
            continue;
        Elite e;
        e.fitness = r.f64();
        e.descriptor = r.vec();
        e.genotype = read_genotype_portable(r);
        out.repertoire.cells_mutable()[static_cast<std::size_t>(c)] = std::move(e);
    }
    return out;
}

inline constexpr std::uint32_t kSkillsMagic = 0x534c4b53; // "SKLS"

/// Skill-set file: latent-conditioned policy, skill count, prior.
inline void write_skillset(std::ostream& os, const Genotype& policy, int num_skills, const Vec& prior,
                           const std::string& env_id)
{
    BinWriter w(os);
    w.u32(kSkillsMagic);
    w.u32(kFormatVersion);
    w.str(env_id);
    w.i32(num_skills);
    w.vec(prior);
    write_genotype_portable(w, policy);
}

struct LoadedSkillSet {
    Genotype policy;
    int num_skills = 0;
    Vec prior;
    std::string env_id;
};

inline LoadedSkillSet read_skillset(std::istream& is)
{
    BinReader r(is);
    if (r.u32() != kSkillsMagic)
        throw std::runtime_error("not a skill-set file");
    if (r.u32() != kFormatVersion)
        throw std::runtime_error("unsupported skill-set version");
    LoadedSkillSet out;
    out.env_id = r.str();
    out.num_skills = r.i32();
    out.prior = r.vec();
    out.policy = read_genotype_portable(r);
    return out;
}

inline void write_unstructured_archive(BinWriter& w, const UnstructuredArchive& arch)
{
    w.f64(arch.l());
    w.u64(arch.budget());
    w.u64(arch.size());
    for (const auto& e : arch.entries()) {
        w.f64(e.fitness);
        w.vec(e.descriptor);
        w.vec(e.trajectory_summary);
        write_genotype_exact(w, e.genotype);
    }
}

inline UnstructuredArchive read_unstructured_archive(BinReader& r)
{
    const double l = r.f64();
    const auto budget = static_cast<std::size_t>(r.u64());
    UnstructuredArchive arch(l, budget);
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        ArchiveEntry e;
        e.fitness = r.f64();
        e.descriptor = r.vec();
        e.trajectory_summary = r.vec();
        e.genotype = read_genotype_exact(r);
        arch.entries_mutable().push_back(std::move(e));
    }
    return arch;
}

// exact (checkpoint) repertoire record: float64 genotypes
inline void write_repertoire_exact(BinWriter& w, const CvtRepertoire& rep)
{
    w.vec(rep.bounds().lo);
    w.vec(rep.bounds().hi);
    w.mat(rep.centroids());
    w.u64(rep.clip_events());
    for (int c = 0; c < rep.num_cells(); ++c) {
        const auto& cell = rep.cell(c);
        w.u8(cell ? 1 : 0);
        if (cell) {
            w.f64(cell->fitness);
            w.vec(cell->descriptor);
            write_genotype_exact(w, cell->genotype);
        }
    }
}

inline CvtRepertoire read_repertoire_exact(BinReader& r)
{
    BoxN bounds;
    bounds.lo = r.vec();
    bounds.hi = r.vec();
    Mat centroids = r.mat();
    CvtRepertoire rep(std::move(centroids), std::move(bounds));
    rep.set_clip_events(r.u64());
    for (int c = 0; c < rep.num_cells(); ++c) {
        if (r.u8() == 0)
            continue;
        Elite e;
        e.fitness = r.f64();
        e.descriptor = r.vec();
        e.genotype = read_genotype_exact(r);
        rep.cells_mutable()[static_cast<std::size_t>(c)] = std::move(e);
    }
    return rep;
}

/// Shortest decimal form that round-trips doubles exactly; keeps CSV output
/// byte-stable across runs.
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v)
                return shorter;
        }
    }
    return buf;
}

} // namespace skillbench
