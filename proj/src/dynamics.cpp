#include "pcs/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <utility>

#include "pcs/operators.hpp"
#include "pcs/rng.hpp"

namespace pcs {

SparseOperator build_model_hamiltonian(const SpaceConfig& space, const SimParams& p) {
    return p.model == ModelKind::effective ? build_effective_hamiltonian(space, p.effective)
                                           : build_full_hamiltonian(space, p.drive);
}

namespace {

constexpr double kLeakGuard = 1e-6;
constexpr double kTraceDriftGuard = 1e-6;
constexpr int kReduceBlock = 32;  // fixed so results do not depend on thread count
const double kNaN = std::numeric_limits<double>::quiet_NaN();

using CVec = std::vector<Complex>;

double coupling_scale(const SpaceConfig& space, const SimParams& p) {
    const double top = static_cast<double>(space.cutoff()) + 1.0;
    if (p.model == ModelKind::effective) return p.effective.alpha * top;
    const DriveParams& d = p.drive;
    const double env = std::exp(-0.5 * d.eta * d.eta);
    return env * (d.omega0 + (d.omega1 + d.omega2) * d.eta * d.eta * top);
}

void validate_sim(const SpaceConfig& space, const SimParams& p) {
    if (!(p.dt > 0.0)) throw SimError(ErrorCode::validation, "dt must be positive");
    if (!(p.t_final > 0.0)) throw SimError(ErrorCode::validation, "t_final must be positive");
    if (p.gamma < 0.0) throw SimError(ErrorCode::validation, "decay rate must be nonnegative");
    if (p.n_traj < 1) throw SimError(ErrorCode::validation, "need at least one trajectory");
    if (p.output_every < 1)
        throw SimError(ErrorCode::validation, "output_every must be at least 1");
    if (p.dt * std::max(p.gamma, coupling_scale(space, p)) >= 0.1)
        throw SimError(ErrorCode::validation,
                       "dt too large for the requested rates (stability guard)");
}

int step_count(const SimParams& p) {
    const double raw = p.t_final / p.dt;
    const long long n = std::llround(raw);
    if (n < 1 || std::abs(raw - static_cast<double>(n)) > 1e-6 * std::max(1.0, raw))
        throw SimError(ErrorCode::validation, "t_final must be a whole number of dt steps");
    if (n > 100'000'000) throw SimError(ErrorCode::validation, "step count out of range");
    return static_cast<int>(n);
}

int resolve_threads() {
    if (const char* env = std::getenv("PCS_SIM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1 || v > 256)
            throw SimError(ErrorCode::validation, "PCS_SIM_THREADS must be an integer in [1,256]");
        return static_cast<int>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// ----- exact support closure -----
//
// The generator couples basis index i to j only along entries of H and of the
// jump operator, so the smallest index set containing the initial support and
// closed under that (symmetric) adjacency confines the whole evolution:
// amplitudes and matrix elements outside it are exactly zero at every step.
// For the relaxation scenario this shrinks (cutoff+1)^2 * 2 indices to the
// ~2(cutoff) members of one charge sector, which is what makes the long runs
// cheap. No approximation is involved.

struct ActiveSet {
    std::vector<int> full_of;    // active index -> full index (ascending)
    std::vector<int> active_of;  // full index -> active index or -1
    int size() const noexcept { return static_cast<int>(full_of.size()); }
};

ActiveSet build_closure(const SpaceConfig& space, std::vector<char> member,
                        const SparseOperator& H, const SparseOperator& jump) {
    const int n = space.dim();
    std::vector<std::vector<int>> adj(static_cast<size_t>(n));
    const auto add_edges = [&](const SparseOperator& op) {
        op.for_each_entry([&](int r, int c, Complex) {
            if (r == c) return;
            adj[static_cast<size_t>(r)].push_back(c);
            adj[static_cast<size_t>(c)].push_back(r);
        });
    };
    add_edges(H);
    add_edges(jump);

    std::vector<int> stack;
    for (int i = 0; i < n; ++i)
        if (member[static_cast<size_t>(i)]) stack.push_back(i);
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j : adj[static_cast<size_t>(i)]) {
            if (member[static_cast<size_t>(j)]) continue;
            member[static_cast<size_t>(j)] = 1;
            stack.push_back(j);
        }
    }

    ActiveSet as;
    as.active_of.assign(static_cast<size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        if (!member[static_cast<size_t>(i)]) continue;
        as.active_of[static_cast<size_t>(i)] = as.size();
        as.full_of.push_back(i);
    }
    return as;
}

struct CompressedModel {
    SpaceConfig space;
    ActiveSet act;
    // H over active indices, CSR
    std::vector<int> h_row_start;
    std::vector<int> h_col;
    std::vector<Complex> h_val;
    std::vector<std::pair<int, double>> losses;   // (active col, weight)
    std::vector<std::pair<int, int>> jump_pairs;  // sigma_- entries (dst, src), value 1
    std::vector<char> excited;                    // sigma_+ sigma_- diagonal
    std::vector<double> charge;                   // n - m per active index
    CVec target;                                  // fidelity target, empty if none

    CompressedModel(const SpaceConfig& sp, ActiveSet a) : space(sp), act(std::move(a)) {}
    int dim() const noexcept { return act.size(); }
};

CompressedModel compress_model(const SpaceConfig& space, const SparseOperator& H,
                               const std::vector<char>& seed,
                               const std::optional<PcsLabel>& target_label) {
    const auto jump = atom_op(space, AtomPauli::sigma_minus);
    CompressedModel m(space, build_closure(space, seed, H, jump));
    const int ad = m.dim();

    std::vector<std::vector<std::pair<int, Complex>>> rows(static_cast<size_t>(ad));
    H.for_each_entry([&](int r, int c, Complex v) {
        const int ar = m.act.active_of[static_cast<size_t>(r)];
        const int ac = m.act.active_of[static_cast<size_t>(c)];
        if (ar < 0 || ac < 0) return;  // exactly-zero region for this run
        rows[static_cast<size_t>(ar)].emplace_back(ac, v);
    });
    m.h_row_start.assign(static_cast<size_t>(ad) + 1, 0);
    for (int r = 0; r < ad; ++r) {
        auto& row = rows[static_cast<size_t>(r)];
        std::sort(row.begin(), row.end(),
                  [](const auto& x, const auto& y) { return x.first < y.first; });
        m.h_row_start[static_cast<size_t>(r) + 1] =
            m.h_row_start[static_cast<size_t>(r)] + static_cast<int>(row.size());
        for (const auto& [c, v] : row) {
            m.h_col.push_back(c);
            m.h_val.push_back(v);
        }
    }

    for (const auto& l : H.boundary_loss()) {
        const int ac = m.act.active_of[static_cast<size_t>(l.col)];
        if (ac >= 0) m.losses.emplace_back(ac, l.weight);
    }

    const int block = space.modes_dim();
    m.excited.assign(static_cast<size_t>(ad), 0);
    m.charge.assign(static_cast<size_t>(ad), 0.0);
    for (int a = 0; a < ad; ++a) {
        const int full = m.act.full_of[static_cast<size_t>(a)];
        const BasisLabel lbl = space.unflat_index(full);
        m.excited[static_cast<size_t>(a)] = lbl.atom == AtomLevel::excited ? 1 : 0;
        m.charge[static_cast<size_t>(a)] = static_cast<double>(lbl.n - lbl.m);
        if (lbl.atom == AtomLevel::excited) {
            const int dst = m.act.active_of[static_cast<size_t>(full - block)];
            if (dst >= 0) m.jump_pairs.emplace_back(dst, a);
        }
    }

    if (target_label) {
        const StateVector t = pcs_state(space, *target_label, AtomLevel::ground);
        m.target.assign(static_cast<size_t>(ad), Complex(0.0));
        for (int a = 0; a < ad; ++a)
            m.target[static_cast<size_t>(a)] = t[m.act.full_of[static_cast<size_t>(a)]];
    }
    return m;
}

std::vector<char> support_of(const StateVector& psi) {
    std::vector<char> s(static_cast<size_t>(psi.dim()), 0);
    for (int i = 0; i < psi.dim(); ++i)
        if (psi[i] != Complex(0.0)) s[static_cast<size_t>(i)] = 1;
    return s;
}

std::vector<char> support_of(const DensityOperator& rho) {
    const int n = rho.dim();
    std::vector<char> s(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (rho(i, j) != Complex(0.0)) {
                s[static_cast<size_t>(i)] = 1;
                s[static_cast<size_t>(j)] = 1;
            }
    return s;
}

// ----- observable extraction from compressed representations -----

struct SampleScalars {
    double sz, pol_re, pol_im, trace, q_mean, fidelity;
};

SampleScalars scalars_from_state(const CompressedModel& m, const CVec& psi) {
    SampleScalars s{0.0, 0.0, 0.0, 0.0, 0.0, kNaN};
    const int ad = m.dim();
    for (int i = 0; i < ad; ++i) {
        const double p = std::norm(psi[static_cast<size_t>(i)]);
        s.trace += p;
        s.sz += m.excited[static_cast<size_t>(i)] ? p : -p;
        s.q_mean += m.charge[static_cast<size_t>(i)] * p;
    }
    Complex lower = 0.0;
    for (const auto& [dst, src] : m.jump_pairs)
        lower += std::conj(psi[static_cast<size_t>(dst)]) * psi[static_cast<size_t>(src)];
    s.pol_re = 2.0 * lower.real();
    s.pol_im = -2.0 * lower.imag();
    if (!m.target.empty()) {
        Complex ov = 0.0;
        for (int i = 0; i < ad; ++i)
            ov += std::conj(m.target[static_cast<size_t>(i)]) * psi[static_cast<size_t>(i)];
        s.fidelity = std::norm(ov);
    }
    return s;
}

SampleScalars scalars_from_density(const CompressedModel& m, const CVec& rho) {
    SampleScalars s{0.0, 0.0, 0.0, 0.0, 0.0, kNaN};
    const int ad = m.dim();
    for (int i = 0; i < ad; ++i) {
        const double d = rho[static_cast<size_t>(i) * static_cast<size_t>(ad) +
                             static_cast<size_t>(i)]
                             .real();
        s.trace += d;
        s.sz += m.excited[static_cast<size_t>(i)] ? d : -d;
        s.q_mean += m.charge[static_cast<size_t>(i)] * d;
    }
    Complex lower = 0.0;  // Tr(sigma_- rho) entries rho[(e,k),(g,k)]
    for (const auto& [dst, src] : m.jump_pairs)
        lower += rho[static_cast<size_t>(src) * static_cast<size_t>(ad) +
                     static_cast<size_t>(dst)];
    s.pol_re = 2.0 * lower.real();
    s.pol_im = -2.0 * lower.imag();
    if (!m.target.empty()) {
        Complex acc = 0.0;
        for (int i = 0; i < ad; ++i) {
            if (m.target[static_cast<size_t>(i)] == Complex(0.0)) continue;
            Complex row = 0.0;
            for (int j = 0; j < ad; ++j)
                row += rho[static_cast<size_t>(i) * static_cast<size_t>(ad) +
                           static_cast<size_t>(j)] *
                       m.target[static_cast<size_t>(j)];
            acc += std::conj(m.target[static_cast<size_t>(i)]) * row;
        }
        s.fidelity = acc.real();
    }
    return s;
}

void push_sample(ObservableSeries& out, double t, const SampleScalars& s, double purity_val,
                 double leak) {
    out.times.push_back(t);
    out.sz.push_back(s.sz);
    out.pol_re.push_back(s.pol_re);
    out.pol_im.push_back(s.pol_im);
    out.trace.push_back(s.trace);
    out.purity.push_back(purity_val);
    out.q_mean.push_back(s.q_mean);
    out.leak.push_back(leak);
    out.fidelity_pcs.push_back(s.fidelity);
}

DensityOperator embed_density(const CompressedModel& m, const CVec& rho, double leak) {
    DensityOperator out(m.space);
    const int ad = m.dim();
    for (int i = 0; i < ad; ++i)
        for (int j = 0; j < ad; ++j)
            out(m.act.full_of[static_cast<size_t>(i)], m.act.full_of[static_cast<size_t>(j)]) =
                rho[static_cast<size_t>(i) * static_cast<size_t>(ad) + static_cast<size_t>(j)];
    out.add_leak(leak);
    return out;
}

StateVector embed_state(const CompressedModel& m, const CVec& psi, double leak) {
    StateVector out(m.space);
    for (int i = 0; i < m.dim(); ++i)
        out[m.act.full_of[static_cast<size_t>(i)]] = psi[static_cast<size_t>(i)];
    out.add_leak(leak);
    return out;
}

// ----- deterministic master-equation kernel -----

class MasterKernel {
public:
    MasterKernel(const CompressedModel& m, double gamma)
        : m_(m), gamma_(gamma), ad_(m.dim()) {
        const size_t sz = static_cast<size_t>(ad_) * static_cast<size_t>(ad_);
        k1_.resize(sz);
        k2_.resize(sz);
        k3_.resize(sz);
        k4_.resize(sz);
        tmp_.resize(sz);
        prod_.resize(sz);
    }

    // dr/dt = -i[H, rho] + gamma (J rho J^+ - {J^+J, rho}/2). With rho and H
    // Hermitian, [H, rho] = M - M^+ for M = H rho, saving the second product.
    void rhs(const CVec& rho, CVec& out, double& leak) {
        const size_t ad = static_cast<size_t>(ad_);
        std::fill(prod_.begin(), prod_.end(), Complex(0.0));
        for (int r = 0; r < ad_; ++r) {
            for (int k = m_.h_row_start[static_cast<size_t>(r)];
                 k < m_.h_row_start[static_cast<size_t>(r) + 1]; ++k) {
                const Complex hv = m_.h_val[static_cast<size_t>(k)];
                const size_t c = static_cast<size_t>(m_.h_col[static_cast<size_t>(k)]);
                const Complex* src = &rho[c * ad];
                Complex* dst = &prod_[static_cast<size_t>(r) * ad];
                for (size_t j = 0; j < ad; ++j) dst[j] += hv * src[j];
            }
        }
        const Complex mi(0.0, -1.0);
        for (size_t i = 0; i < ad; ++i)
            for (size_t j = 0; j < ad; ++j)
                out[i * ad + j] = mi * (prod_[i * ad + j] - std::conj(prod_[j * ad + i]));

        if (gamma_ > 0.0) {
            for (const auto& [d1, s1] : m_.jump_pairs)
                for (const auto& [d2, s2] : m_.jump_pairs)
                    out[static_cast<size_t>(d1) * ad + static_cast<size_t>(d2)] +=
                        gamma_ * rho[static_cast<size_t>(s1) * ad + static_cast<size_t>(s2)];
            const double half = 0.5 * gamma_;
            for (int i = 0; i < ad_; ++i) {
                if (m_.excited[static_cast<size_t>(i)]) {
                    for (size_t j = 0; j < ad; ++j)
                        out[static_cast<size_t>(i) * ad + j] -=
                            half * rho[static_cast<size_t>(i) * ad + j];
                }
            }
            for (size_t i = 0; i < ad; ++i)
                for (int j = 0; j < ad_; ++j)
                    if (m_.excited[static_cast<size_t>(j)])
                        out[i * ad + static_cast<size_t>(j)] -=
                            half * rho[i * ad + static_cast<size_t>(j)];
        }

        for (const auto& [c, w] : m_.losses)
            leak += w * std::max(0.0, rho[static_cast<size_t>(c) * ad + static_cast<size_t>(c)]
                                          .real());
    }

    void step(CVec& rho, double dt, double& leak) {
        const size_t sz = rho.size();
        rhs(rho, k1_, leak);
        for (size_t i = 0; i < sz; ++i) tmp_[i] = rho[i] + 0.5 * dt * k1_[i];
        rhs(tmp_, k2_, leak);
        for (size_t i = 0; i < sz; ++i) tmp_[i] = rho[i] + 0.5 * dt * k2_[i];
        rhs(tmp_, k3_, leak);
        for (size_t i = 0; i < sz; ++i) tmp_[i] = rho[i] + dt * k3_[i];
        rhs(tmp_, k4_, leak);
        const double w = dt / 6.0;
        for (size_t i = 0; i < sz; ++i)
            rho[i] += w * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

    // Returns the pre-renormalization trace so the caller can check drift.
    double renormalize(CVec& rho) const {
        const size_t ad = static_cast<size_t>(ad_);
        double tr = 0.0;
        for (size_t i = 0; i < ad; ++i) tr += rho[i * ad + i].real();
        if (!std::isfinite(tr) || tr <= 0.0)
            throw SimError(ErrorCode::numerical, "density trace became invalid");
        const double inv = 1.0 / tr;
        for (Complex& v : rho) v *= inv;
        for (size_t i = 0; i < ad; ++i) {
            rho[i * ad + i] = Complex(rho[i * ad + i].real(), 0.0);
            for (size_t j = i + 1; j < ad; ++j) {
                const Complex avg = 0.5 * (rho[i * ad + j] + std::conj(rho[j * ad + i]));
                rho[i * ad + j] = avg;
                rho[j * ad + i] = std::conj(avg);
            }
        }
        return tr;
    }

    double purity_of(const CVec& rho) const {
        double s = 0.0;
        for (const Complex& v : rho) s += std::norm(v);
        return s;
    }

private:
    const CompressedModel& m_;
    double gamma_;
    int ad_;
    CVec k1_, k2_, k3_, k4_, tmp_, prod_;
};

// snapshot bookkeeping: map requested times to step indices
std::vector<std::pair<int, double>> snapshot_steps(const SnapshotSink* snaps, double dt,
                                                   int n_steps) {
    std::vector<std::pair<int, double>> out;
    if (!snaps) return out;
    if (!snaps->emit) throw SimError(ErrorCode::validation, "snapshot sink has no emit callback");
    for (double t : snaps->times) {
        const long long s = std::llround(t / dt);
        if (t < 0.0 || s < 0 || s > n_steps)
            throw SimError(ErrorCode::validation, "snapshot time outside the run interval");
        out.emplace_back(static_cast<int>(s), t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

DensityOperator lindblad_rhs(const DensityOperator& rho, const SparseOperator& H, double gamma) {
    require_same_space(rho.space(), H.space());
    const int n = rho.dim();
    DensityOperator out(rho.space());
    const Complex mi(0.0, -1.0);
    // -i H rho and +i rho H
    H.for_each_entry([&](int r, int c, Complex v) {
        const Complex f = mi * v;
        for (int j = 0; j < n; ++j) out(r, j) += f * rho(c, j);
    });
    H.for_each_entry([&](int r, int c, Complex v) {
        const Complex f = -mi * v;  // +i rho(., r) H(r, c)
        for (int i = 0; i < n; ++i) out(i, c) += f * rho(i, r);
    });
    if (gamma > 0.0) {
        const int block = rho.space().modes_dim();
        for (int k = 0; k < block; ++k)
            for (int l = 0; l < block; ++l)
                out(k, l) += gamma * rho(block + k, block + l);
        const double half = 0.5 * gamma;
        for (int k = 0; k < block; ++k)
            for (int j = 0; j < n; ++j) {
                out(block + k, j) -= half * rho(block + k, j);
                out(j, block + k) -= half * rho(j, block + k);
            }
    }
    return out;
}

MasterResult integrate_master_equation(const DensityOperator& rho0, const SimParams& p,
                                       const SnapshotSink* snapshots) {
    const SpaceConfig space = rho0.space();
    validate_sim(space, p);
    if (std::abs(rho0.trace().real() - 1.0) > 1e-6)
        throw SimError(ErrorCode::validation, "initial density operator must have unit trace");

    const auto H = build_model_hamiltonian(space, p);
    const CompressedModel m = compress_model(space, H, support_of(rho0), p.fidelity_target);
    const int ad = m.dim();
    const int n_steps = step_count(p);
    const auto snaps = snapshot_steps(snapshots, p.dt, n_steps);

    CVec rho(static_cast<size_t>(ad) * static_cast<size_t>(ad));
    for (int i = 0; i < ad; ++i)
        for (int j = 0; j < ad; ++j)
            rho[static_cast<size_t>(i) * static_cast<size_t>(ad) + static_cast<size_t>(j)] =
                rho0(m.act.full_of[static_cast<size_t>(i)], m.act.full_of[static_cast<size_t>(j)]);

    MasterKernel kern(m, p.gamma);
    double leak = rho0.leak();
    ObservableSeries series;
    size_t snap_pos = 0;

    const auto record = [&](int step) {
        push_sample(series, static_cast<double>(step) * p.dt, scalars_from_density(m, rho),
                    kern.purity_of(rho), leak);
    };
    const auto emit_snaps = [&](int step) {
        while (snap_pos < snaps.size() && snaps[snap_pos].first == step) {
            snapshots->emit(snaps[snap_pos].second, embed_density(m, rho, leak));
            ++snap_pos;
        }
    };

    record(0);
    emit_snaps(0);
    for (int step = 1; step <= n_steps; ++step) {
        kern.step(rho, p.dt, leak);
        const double tr = kern.renormalize(rho);
        if (std::abs(tr - 1.0) > kTraceDriftGuard)
            throw SimError(ErrorCode::integration, "trace drifted beyond tolerance at step " +
                                                       std::to_string(step));
        if (leak > kLeakGuard)
            throw SimError(ErrorCode::truncation,
                           "truncation leak exceeded 1e-6; raise the cutoff");
        if (step % p.output_every == 0) record(step);
        emit_snaps(step);
    }

    return {embed_density(m, rho, leak), std::move(series)};
}

namespace {

// ----- stochastic trajectory kernel -----

class JumpKernel {
public:
    JumpKernel(const CompressedModel& m, double gamma) : m_(m), gamma_(gamma), ad_(m.dim()) {
        k1_.resize(static_cast<size_t>(ad_));
        k2_.resize(static_cast<size_t>(ad_));
        k3_.resize(static_cast<size_t>(ad_));
        k4_.resize(static_cast<size_t>(ad_));
        tmp_.resize(static_cast<size_t>(ad_));
    }

    // d psi/dt = (-i H - (gamma/2) J^+J) psi
    void deriv(const CVec& psi, CVec& out, double& leak) const {
        const Complex mi(0.0, -1.0);
        for (int r = 0; r < ad_; ++r) {
            Complex acc = 0.0;
            for (int k = m_.h_row_start[static_cast<size_t>(r)];
                 k < m_.h_row_start[static_cast<size_t>(r) + 1]; ++k)
                acc += m_.h_val[static_cast<size_t>(k)] *
                       psi[static_cast<size_t>(m_.h_col[static_cast<size_t>(k)])];
            out[static_cast<size_t>(r)] = mi * acc;
            if (m_.excited[static_cast<size_t>(r)])
                out[static_cast<size_t>(r)] -= 0.5 * gamma_ * psi[static_cast<size_t>(r)];
        }
        for (const auto& [c, w] : m_.losses)
            leak += w * std::norm(psi[static_cast<size_t>(c)]);
    }

    void step(CVec& psi, double h, double& leak) {
        const size_t n = psi.size();
        deriv(psi, k1_, leak);
        for (size_t i = 0; i < n; ++i) tmp_[i] = psi[i] + 0.5 * h * k1_[i];
        deriv(tmp_, k2_, leak);
        for (size_t i = 0; i < n; ++i) tmp_[i] = psi[i] + 0.5 * h * k2_[i];
        deriv(tmp_, k3_, leak);
        for (size_t i = 0; i < n; ++i) tmp_[i] = psi[i] + h * k3_[i];
        deriv(tmp_, k4_, leak);
        const double w = h / 6.0;
        for (size_t i = 0; i < n; ++i)
            psi[i] += w * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

private:
    const CompressedModel& m_;
    double gamma_;
    int ad_;
    mutable CVec k1_, k2_, k3_, k4_, tmp_;
};

double norm2_of(const CVec& v) {
    double s = 0.0;
    for (const Complex& a : v) s += std::norm(a);
    return s;
}

CVec normalized_copy(const CVec& v) {
    CVec out = v;
    const double n = std::sqrt(norm2_of(v));
    if (n == 0.0) throw SimError(ErrorCode::numerical, "state vector collapsed to zero");
    for (Complex& a : out) a *= 1.0 / n;
    return out;
}

struct TrajOutput {
    std::vector<CVec> sample_states;  // normalized, one per sample time
    std::vector<double> sample_leaks;
    std::vector<double> jump_times;
    CVec final_state;  // normalized, at t_final
    double final_leak = 0.0;
    std::uint64_t seed_used = 0;
};

TrajOutput run_trajectory(const CompressedModel& m, const SimParams& p, const CVec& psi0,
                          double leak0, int traj_index, int n_steps) {
    JumpKernel kern(m, p.gamma);
    CounterRng rng(p.master_seed, static_cast<std::uint64_t>(traj_index));
    const bool jumps_on = p.gamma > 0.0;

    TrajOutput out;
    out.seed_used = rng.key();
    CVec psi = psi0;
    double leak = leak0;
    double threshold = jumps_on ? rng.next_uniform() : 0.0;

    out.sample_states.push_back(normalized_copy(psi));
    out.sample_leaks.push_back(leak);

    CVec probe(psi.size());
    for (int step = 1; step <= n_steps; ++step) {
        const double t_step_start = static_cast<double>(step - 1) * p.dt;
        CVec pre = psi;
        double t_off = 0.0;  // offset of `pre` within the step
        int cascade = 0;
        for (;;) {
            const double remaining = p.dt - t_off;
            CVec next = pre;
            double leak_seg = 0.0;
            kern.step(next, remaining, leak_seg);
            const double n2 = norm2_of(next);
            if (!std::isfinite(n2))
                throw SimError(ErrorCode::numerical, "nonfinite amplitude during propagation");
            if (!jumps_on || n2 >= threshold) {
                psi = std::move(next);
                leak += leak_seg;
                break;
            }
            if (++cascade > 64)
                throw SimError(ErrorCode::numerical, "jump cascade did not terminate");

            // Norm decay is monotone, so the crossing lies in (0, remaining];
            // 10 halvings pin it to within 1e-3 of the step size.
            double lo = 0.0, hi = remaining;
            for (int it = 0; it < 10; ++it) {
                const double mid = 0.5 * (lo + hi);
                probe = pre;
                double scratch = 0.0;
                kern.step(probe, mid, scratch);
                (norm2_of(probe) < threshold ? hi : lo) = mid;
            }
            probe = pre;
            double leak_jump = 0.0;
            kern.step(probe, hi, leak_jump);
            leak += leak_jump;

            CVec jumped(psi.size(), Complex(0.0));
            for (const auto& [dst, src] : m.jump_pairs)
                jumped[static_cast<size_t>(dst)] = probe[static_cast<size_t>(src)];
            const double jn = std::sqrt(norm2_of(jumped));
            if (jn == 0.0)
                throw SimError(ErrorCode::numerical, "jump produced a zero state");
            for (Complex& a : jumped) a *= 1.0 / jn;

            out.jump_times.push_back(t_step_start + t_off + hi);
            threshold = rng.next_uniform();
            t_off += hi;
            pre = std::move(jumped);
            if (p.dt - t_off <= 1e-12 * p.dt) {
                psi = pre;
                break;
            }
        }

        if (leak > kLeakGuard)
            throw SimError(ErrorCode::truncation, "truncation leak exceeded 1e-6; raise the cutoff");
        if (step % p.output_every == 0) {
            out.sample_states.push_back(normalized_copy(psi));
            out.sample_leaks.push_back(leak);
        }
    }
    out.final_state = normalized_copy(psi);
    out.final_leak = leak;
    return out;
}

CVec compress_state(const CompressedModel& m, const StateVector& psi) {
    CVec out(static_cast<size_t>(m.dim()));
    for (int i = 0; i < m.dim(); ++i)
        out[static_cast<size_t>(i)] = psi[m.act.full_of[static_cast<size_t>(i)]];
    return out;
}

void check_normalized(const StateVector& psi) {
    if (std::abs(psi.norm() - 1.0) > 1e-6)
        throw SimError(ErrorCode::validation, "initial state must be normalized");
}

ObservableSeries series_from_samples(const CompressedModel& m, const TrajOutput& tr, double dt,
                                     int output_every) {
    ObservableSeries s;
    for (size_t k = 0; k < tr.sample_states.size(); ++k) {
        const double t = static_cast<double>(k) * static_cast<double>(output_every) * dt;
        push_sample(s, t, scalars_from_state(m, tr.sample_states[k]), kNaN, tr.sample_leaks[k]);
    }
    return s;
}

}  // namespace

TrajectoryResult mc_trajectory(const StateVector& psi0, const SimParams& p, int traj_index) {
    const SpaceConfig space = psi0.space();
    validate_sim(space, p);
    check_normalized(psi0);
    if (traj_index < 0) throw SimError(ErrorCode::validation, "trajectory index must be >= 0");

    const auto H = build_model_hamiltonian(space, p);
    const CompressedModel m = compress_model(space, H, support_of(psi0), p.fidelity_target);
    const int n_steps = step_count(p);

    TrajOutput tr =
        run_trajectory(m, p, compress_state(m, psi0), psi0.leak(), traj_index, n_steps);
    return TrajectoryResult{embed_state(m, tr.final_state, tr.final_leak),
                            std::move(tr.jump_times),
                            series_from_samples(m, tr, p.dt, p.output_every), tr.seed_used};
}

EnsembleResult mc_ensemble(const StateVector& psi0, const SimParams& p,
                           const SnapshotSink* snapshots) {
    const SpaceConfig space = psi0.space();
    validate_sim(space, p);
    check_normalized(psi0);

    const auto H = build_model_hamiltonian(space, p);
    const CompressedModel m = compress_model(space, H, support_of(psi0), p.fidelity_target);
    const int ad = m.dim();
    const int n_steps = step_count(p);
    const int n_samples = n_steps / p.output_every + 1;
    const CVec psi0c = compress_state(m, psi0);
    const int n_threads = resolve_threads();

    // Snapshot times must sit on the sample grid for ensemble runs.
    std::vector<std::pair<int, double>> snaps;  // (sample index, requested time)
    if (snapshots) {
        if (!snapshots->emit)
            throw SimError(ErrorCode::validation, "snapshot sink has no emit callback");
        const double sample_dt = static_cast<double>(p.output_every) * p.dt;
        for (double t : snapshots->times) {
            const long long k = std::llround(t / sample_dt);
            if (t < 0.0 || k < 0 || k >= n_samples)
                throw SimError(ErrorCode::validation, "snapshot time outside the run interval");
            snaps.emplace_back(static_cast<int>(k), t);
        }
    }

    const size_t mat = static_cast<size_t>(ad) * static_cast<size_t>(ad);
    std::vector<CVec> rho_sum(static_cast<size_t>(n_samples), CVec(mat, Complex(0.0)));
    CVec rho_final_sum(mat, Complex(0.0));

    // per-sample scalar accumulators, reduced strictly in trajectory order
    struct Acc {
        std::vector<double> sum, sumsq;
        explicit Acc(int n) : sum(static_cast<size_t>(n), 0.0), sumsq(static_cast<size_t>(n), 0.0) {}
        void add(int k, double v) {
            sum[static_cast<size_t>(k)] += v;
            sumsq[static_cast<size_t>(k)] += v * v;
        }
    };
    Acc a_sz(n_samples), a_pre(n_samples), a_pim(n_samples), a_tr(n_samples), a_q(n_samples),
        a_leak(n_samples), a_fid(n_samples);

    JumpStats jumps;
    jumps.min_per_traj = std::numeric_limits<int>::max();
    double final_leak_sum = 0.0;

    std::vector<TrajOutput> slots(static_cast<size_t>(std::min(kReduceBlock, p.n_traj)));
    std::vector<std::exception_ptr> errors(slots.size());

    for (int base = 0; base < p.n_traj; base += kReduceBlock) {
        const int count = std::min(kReduceBlock, p.n_traj - base);
        std::fill(errors.begin(), errors.end(), nullptr);

        const auto work = [&](int worker) {
            for (int off = worker; off < count; off += n_threads) {
                try {
                    slots[static_cast<size_t>(off)] =
                        run_trajectory(m, p, psi0c, psi0.leak(), base + off, n_steps);
                } catch (...) {
                    errors[static_cast<size_t>(off)] = std::current_exception();
                }
            }
        };
        if (n_threads == 1 || count == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            const int used = std::min(n_threads, count);
            pool.reserve(static_cast<size_t>(used));
            for (int w = 0; w < used; ++w) pool.emplace_back(work, w);
            for (auto& th : pool) th.join();
        }

        for (int off = 0; off < count; ++off) {
            if (errors[static_cast<size_t>(off)]) {
                try {
                    std::rethrow_exception(errors[static_cast<size_t>(off)]);
                } catch (const SimError& e) {
                    throw SimError(e.code(), "trajectory " + std::to_string(base + off) + ": " +
                                                 e.what());
                }
            }
            const TrajOutput& tr = slots[static_cast<size_t>(off)];
            if (static_cast<int>(tr.sample_states.size()) != n_samples)
                throw SimError(ErrorCode::numerical, "trajectory sample count mismatch");
            for (int k = 0; k < n_samples; ++k) {
                const CVec& st = tr.sample_states[static_cast<size_t>(k)];
                const SampleScalars sc = scalars_from_state(m, st);
                a_sz.add(k, sc.sz);
                a_pre.add(k, sc.pol_re);
                a_pim.add(k, sc.pol_im);
                a_tr.add(k, sc.trace);
                a_q.add(k, sc.q_mean);
                a_leak.add(k, tr.sample_leaks[static_cast<size_t>(k)]);
                if (!m.target.empty()) a_fid.add(k, sc.fidelity);
                CVec& acc = rho_sum[static_cast<size_t>(k)];
                for (int i = 0; i < ad; ++i) {
                    const Complex ci = st[static_cast<size_t>(i)];
                    if (ci == Complex(0.0)) continue;
                    for (int j = 0; j < ad; ++j)
                        acc[static_cast<size_t>(i) * static_cast<size_t>(ad) +
                            static_cast<size_t>(j)] += ci * std::conj(st[static_cast<size_t>(j)]);
                }
            }
            for (int i = 0; i < ad; ++i) {
                const Complex ci = tr.final_state[static_cast<size_t>(i)];
                if (ci == Complex(0.0)) continue;
                for (int j = 0; j < ad; ++j)
                    rho_final_sum[static_cast<size_t>(i) * static_cast<size_t>(ad) +
                                  static_cast<size_t>(j)] +=
                        ci * std::conj(tr.final_state[static_cast<size_t>(j)]);
            }
            final_leak_sum += tr.final_leak;
            const int nj = static_cast<int>(tr.jump_times.size());
            jumps.total += nj;
            jumps.min_per_traj = std::min(jumps.min_per_traj, nj);
            jumps.max_per_traj = std::max(jumps.max_per_traj, nj);
        }
    }
    jumps.mean_per_traj = static_cast<double>(jumps.total) / static_cast<double>(p.n_traj);

    const double inv_n = 1.0 / static_cast<double>(p.n_traj);
    const auto mean_of = [&](const Acc& a, int k) { return a.sum[static_cast<size_t>(k)] * inv_n; };
    const auto sem_of = [&](const Acc& a, int k) {
        if (p.n_traj < 2) return 0.0;
        const double mean = mean_of(a, k);
        const double var =
            (a.sumsq[static_cast<size_t>(k)] - static_cast<double>(p.n_traj) * mean * mean) /
            static_cast<double>(p.n_traj - 1);
        return std::sqrt(std::max(0.0, var) * inv_n);
    };

    ObservableSeries mean, sem;
    const double mean_final_leak = final_leak_sum * inv_n;
    for (int k = 0; k < n_samples; ++k) {
        const double t = static_cast<double>(k) * static_cast<double>(p.output_every) * p.dt;
        CVec& acc = rho_sum[static_cast<size_t>(k)];
        for (Complex& v : acc) v *= inv_n;
        double pur = 0.0;
        for (const Complex& v : acc) pur += std::norm(v);
        SampleScalars ms{mean_of(a_sz, k),  mean_of(a_pre, k), mean_of(a_pim, k),
                         mean_of(a_tr, k),  mean_of(a_q, k),
                         m.target.empty() ? kNaN : mean_of(a_fid, k)};
        push_sample(mean, t, ms, pur, mean_of(a_leak, k));
        SampleScalars es{sem_of(a_sz, k),  sem_of(a_pre, k), sem_of(a_pim, k),
                         sem_of(a_tr, k),  sem_of(a_q, k),
                         m.target.empty() ? kNaN : sem_of(a_fid, k)};
        push_sample(sem, t, es, kNaN, sem_of(a_leak, k));
    }

    for (const auto& [k, t] : snaps)
        snapshots->emit(t, embed_density(m, rho_sum[static_cast<size_t>(k)], mean_of(a_leak, k)));

    for (Complex& v : rho_final_sum) v *= inv_n;
    DensityOperator rho_final = embed_density(m, rho_final_sum, mean_final_leak);
    return EnsembleResult{std::move(rho_final), std::move(mean), std::move(sem), jumps};
}

bool detect_steady_state(const DensityOperator& rho, const SparseOperator& H, double gamma,
                         double tol) {
    require_same_space(rho.space(), H.space());
    if (!(tol > 0.0)) throw SimError(ErrorCode::validation, "tolerance must be positive");
    const DensityOperator rhs = lindblad_rhs(rho, H, gamma);
    double rhs_max = 0.0;
    for (const Complex& v : rhs.data()) rhs_max = std::max(rhs_max, std::abs(v));
    if (rhs_max >= tol) return false;

    const int n = rho.dim();
    DensityOperator comm(rho.space());
    H.for_each_entry([&](int r, int c, Complex v) {
        for (int j = 0; j < n; ++j) comm(r, j) += v * rho(c, j);
    });
    H.for_each_entry([&](int r, int c, Complex v) {
        for (int i = 0; i < n; ++i) comm(i, c) -= rho(i, r) * v;
    });
    double comm_max = 0.0;
    for (const Complex& v : comm.data()) comm_max = std::max(comm_max, std::abs(v));
    return comm_max < tol;
}

namespace {

SimParams quenched_params(const SimParams& p) {
    SimParams q = p;
    if (q.model == ModelKind::effective)
        q.effective.xi = Complex(0.0);
    else
        q.drive.omega0 = 0.0;
    return q;
}

}  // namespace

ObservableSeries quench_carrier(const DensityOperator& steady, const SimParams& p,
                                const SnapshotSink* snapshots) {
    return integrate_master_equation(steady, quenched_params(p), snapshots).series;
}

ObservableSeries quench_carrier(const StateVector& steady, const SimParams& p,
                                const SnapshotSink* snapshots) {
    const SimParams q = quenched_params(p);
    if (p.gamma == 0.0) {
        if (snapshots && !snapshots->times.empty())
            throw SimError(ErrorCode::validation,
                           "snapshots are not supported on the unitary quench path");
        return mc_trajectory(steady, q, 0).series;
    }
    return integrate_master_equation(DensityOperator::pure(steady), q, snapshots).series;
}

}  // namespace pcs
