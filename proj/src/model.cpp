#include "qhedge/model.hpp"

#include <cmath>
#include <sstream>

namespace qhedge {

const char* to_string(DriverKind kind) {
    switch (kind) {
        case DriverKind::Linear: return "linear";
        case DriverKind::BorrowSpread: return "borrow_spread";
        case DriverKind::TwoRates: return "two_rates";
    }
    return "?";
}

MarketModel::MarketModel(double mu, double sigma, double horizon, DriverSpec driver)
    : mu_(mu), sigma_(sigma), horizon_(horizon), driver_(driver) {
    if (!std::isfinite(mu)) throw InvalidArgument("mu must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be positive");
    if (!std::isfinite(driver.lend_rate) || !std::isfinite(driver.borrow_rate))
        throw InvalidArgument("driver rates must be finite");
}

double driver_lipschitz(const MarketModel& model) {
    const double abs_mu = std::abs(model.mu());
    const DriverSpec& d = model.driver();
    switch (d.kind) {
        case DriverKind::Linear: return abs_mu;
        case DriverKind::BorrowSpread: return abs_mu + d.borrow_rate;
        case DriverKind::TwoRates: return d.lend_rate + abs_mu + (d.borrow_rate - d.lend_rate);
    }
    return abs_mu;
}

DriverPartialBounds driver_partial_bounds(const MarketModel& model) {
    const double abs_mu = std::abs(model.mu());
    const double sigma = model.sigma();
    const DriverSpec& d = model.driver();
    switch (d.kind) {
        case DriverKind::Linear:
            return {0.0, abs_mu / sigma};
        case DriverKind::BorrowSpread:
            return {std::abs(d.borrow_rate), (abs_mu + std::abs(d.borrow_rate)) / sigma};
        case DriverKind::TwoRates: {
            const double spread = std::abs(d.borrow_rate - d.lend_rate);
            // df/dy is -r or -R depending on the sign of the cash position.
            return {std::max(std::abs(d.lend_rate), std::abs(d.borrow_rate)), (abs_mu + spread) / sigma};
        }
    }
    return {};
}

Payoff Payoff::put(double strike) {
    if (!(strike >= 0.0) || !std::isfinite(strike)) throw InvalidArgument("put strike must be non-negative");
    Payoff g;
    g.kind_ = Kind::Put;
    g.strike_ = strike;
    g.bound_ = strike;
    // |d/dx (K - e^x)^+| <= K
    g.lipschitz_ = strike;
    return g;
}

Payoff Payoff::custom(std::vector<std::pair<double, double>> samples, double lipschitz) {
    if (samples.empty()) throw InvalidArgument("custom payoff needs at least one sample");
    if (!(lipschitz >= 0.0)) throw InvalidArgument("custom payoff Lipschitz constant must be non-negative");
    std::sort(samples.begin(), samples.end());
    double bound = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto [x, gx] = samples[i];
        if (!std::isfinite(x) || !std::isfinite(gx)) throw InvalidArgument("custom payoff samples must be finite");
        bound = std::max(bound, std::abs(gx));
        if (i == 0) continue;
        const double dx = x - samples[i - 1].first;
        if (dx <= 0.0) throw InvalidArgument("custom payoff sample abscissae must be distinct");
        const double slope = std::abs(gx - samples[i - 1].second) / dx;
        if (slope > lipschitz * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "custom payoff slope " << slope << " on [" << samples[i - 1].first << ", " << x
               << "] exceeds declared Lipschitz constant " << lipschitz;
            throw InvalidArgument(os.str());
        }
    }
    Payoff g;
    g.kind_ = Kind::Custom;
    g.bound_ = bound;
    g.lipschitz_ = lipschitz;
    g.samples_ = std::move(samples);
    return g;
}

double Payoff::operator()(double x) const {
    if (kind_ == Kind::Put) return std::max(strike_ - std::exp(x), 0.0);
    if (x <= samples_.front().first) return samples_.front().second;
    if (x >= samples_.back().first) return samples_.back().second;
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), x,
                                     [](double v, const auto& s) { return v < s.first; });
    const auto& [x1, g1] = *it;
    const auto& [x0, g0] = *(it - 1);
    const double w = (x - x0) / (x1 - x0);
    return (1.0 - w) * g0 + w * g1;
}

void SchemeParams::validate() const {
    if (!(theta > 0.0)) throw InvalidArgument("theta must be positive");
    if (!(M > 0.0)) throw InvalidArgument("M must be positive");
    if (!(picard_tol > 0.0)) throw InvalidArgument("picard_tol must be positive");
    if (picard_max_iters < 1) throw InvalidArgument("picard_max_iters must be at least 1");
    if (lipschitz_L && !(*lipschitz_L >= 0.0)) throw InvalidArgument("lipschitz_L must be non-negative");
}

bool AssumptionReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const AssumptionCheck* AssumptionReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

namespace {

std::string point(double t, double x, double y, double z) {
    std::ostringstream os;
    os << "(t=" << t << ", x=" << x << ", y=" << y << ", z=" << z << ")";
    return os.str();
}

}  // namespace

AssumptionReport check_assumptions(const MarketModel& model, const Payoff& payoff) {
    AssumptionReport report;
    constexpr int lattice = 10;
    const double T = model.horizon();
    auto lattice_t = [&](int i) { return T * i / (lattice - 1); };
    auto lattice_x = [&](int i) { return -3.0 + 9.0 * i / (lattice - 1); };
    auto lattice_y = [&](int i) { return -2.0 + 4.0 * i / (lattice - 1); };

    AssumptionCheck zero{"driver_vanishes_at_origin", true, {}};
    for (int i = 0; i < lattice && zero.passed; ++i)
        for (int j = 0; j < lattice && zero.passed; ++j) {
            const double f = eval_driver(model, lattice_t(i), lattice_x(j), 0.0, 0.0);
            if (f != 0.0) {
                zero.passed = false;
                zero.detail = point(lattice_t(i), lattice_x(j), 0.0, 0.0);
            }
        }
    report.checks.push_back(zero);

    AssumptionCheck mono{"driver_nonincreasing_in_y", true, {}};
    constexpr double dy = 1e-3;
    constexpr double z_samples[] = {-1.0, 0.0, 0.5, 1.0};
    for (int i = 0; i < lattice && mono.passed; ++i)
        for (int j = 0; j < lattice && mono.passed; ++j)
            for (int k = 0; k < lattice && mono.passed; ++k)
                for (double z : z_samples) {
                    const double t = lattice_t(i), x = lattice_x(j), y = lattice_y(k);
                    const double diff = eval_driver(model, t, x, y + dy, z) - eval_driver(model, t, x, y, z);
                    if (diff > 1e-14) {
                        mono.passed = false;
                        mono.detail = point(t, x, y, z);
                        break;
                    }
                }
    report.checks.push_back(mono);

    AssumptionCheck rates{"driver_rates_ordered", true, {}};
    const DriverSpec& d = model.driver();
    if (d.kind == DriverKind::BorrowSpread && d.borrow_rate < 0.0) {
        rates.passed = false;
        rates.detail = "R < 0";
    } else if (d.kind == DriverKind::TwoRates && !(d.borrow_rate >= d.lend_rate && d.lend_rate >= 0.0)) {
        rates.passed = false;
        rates.detail = "requires R >= r >= 0";
    }
    report.checks.push_back(rates);

    AssumptionCheck bounded{"payoff_bounded", std::isfinite(payoff.bound()), {}};
    if (!bounded.passed) bounded.detail = "sup |g| is not finite";
    report.checks.push_back(bounded);

    report.upwind = upwind_for(model);
    report.checks.push_back(
        {"drift_sign", true, report.upwind == Upwind::Forward ? "mu >= 0: forward upwinding" : "mu < 0: backward upwinding"});
    return report;
}

const char* to_string(CflCondition c) {
    switch (c) {
        case CflCondition::SpaceStepAtMostOne: return "delta <= 1";
        case CflCondition::LaxFriedrichs: return "h*L/(2*delta) <= theta";
        case CflCondition::ThetaBelowQuarter: return "theta < 1/4";
        case CflCondition::DriftBelowSpace: return "|mu|*h <= delta";
        case CflCondition::SpaceBelowMTime: return "delta <= M*h";
    }
    return "?";
}

bool CflReport::violates(CflCondition c) const {
    return std::find(violations.begin(), violations.end(), c) != violations.end();
}

std::string CflReport::describe() const {
    if (ok()) return "ok";
    std::string s;
    for (auto c : violations) {
        if (!s.empty()) s += "; ";
        s += to_string(c);
    }
    return s;
}

CflReport check_cfl(double h, double delta, const SchemeParams& params, const MarketModel& model) {
    if (!(h > 0.0) || !(delta > 0.0)) throw InvalidArgument("check_cfl: h and delta must be positive");
    CflReport r;
    if (delta > 1.0) r.violations.push_back(CflCondition::SpaceStepAtMostOne);
    if (h * params.lipschitz(model) / (2.0 * delta) > params.theta) r.violations.push_back(CflCondition::LaxFriedrichs);
    if (!(params.theta < 0.25)) r.violations.push_back(CflCondition::ThetaBelowQuarter);
    if (std::abs(model.mu()) * h > delta) r.violations.push_back(CflCondition::DriftBelowSpace);
    if (delta > params.M * h) r.violations.push_back(CflCondition::SpaceBelowMTime);
    return r;
}

}  // namespace qhedge
