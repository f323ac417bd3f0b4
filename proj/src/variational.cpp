#include "delayhjb/variational.hpp"

#include "delayhjb/parallel.hpp"
#include "delayhjb/random.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace delayhjb {

void SearchDomain::validate() const {
    if (candidates.empty()) throw std::invalid_argument("search domain is empty");
    for (const auto& c : candidates)
        if (c.time < floor_time) throw std::invalid_argument("search domain: candidate time below the floor");
}

std::vector<double> halving_deltas(double delta0, std::size_t count) {
    if (!(delta0 > 0.0)) throw std::invalid_argument("deltas must be positive");
    std::vector<double> d(count);
    for (std::size_t i = 0; i < count; ++i) d[i] = std::ldexp(delta0, -static_cast<int>(i));
    return d;
}

VariationalResult borwein_preiss(const PathObjective& f, const PairPenalty& rho,
                                 std::vector<double> deltas, double epsilon, std::size_t start,
                                 const SearchDomain& domain, std::size_t max_iters, int threads) {
    domain.validate();
    if (!(epsilon > 0.0)) throw std::invalid_argument("borwein_preiss: epsilon must be positive");
    if (deltas.empty()) throw std::invalid_argument("borwein_preiss: need at least delta_0");
    for (double d : deltas)
        if (!(d > 0.0)) throw std::invalid_argument("borwein_preiss: deltas must be positive");
    if (start >= domain.size()) throw std::out_of_range("borwein_preiss: start not in the domain");

    const std::size_t n = domain.size();
    std::vector<double> fv(n);
    parallel_for(n, threads, [&](std::size_t j) { fv[j] = f(domain.candidates[j]); });
    const double sup = *std::max_element(fv.begin(), fv.end());
    if (fv[start] < sup - epsilon)
        throw NotEpsilonMaximal("borwein_preiss: start is not epsilon-maximal (f(start) = " +
                                std::to_string(fv[start]) + ", sup = " + std::to_string(sup) + ")");

    auto delta_at = [&](std::size_t i) {
        while (deltas.size() <= i) deltas.push_back(0.5 * deltas.back());
        return deltas[i];
    };

    VariationalResult res;
    std::vector<double> penalty(n, 0.0);
    std::vector<double> dist(n);
    std::size_t center = start;
    for (;;) {
        const std::size_t i = res.centers.size();
        const double w = delta_at(i);
        res.centers.push_back(center);
        res.weights.push_back(w);
        const TimedPath& c = domain.candidates[center];
        parallel_for(n, threads, [&](std::size_t j) { dist[j] = rho(domain.candidates[j], c); });
        for (std::size_t j = 0; j < n; ++j) penalty[j] += w * dist[j];

        if (res.iterations >= max_iters) {
            res.stabilized = false;
            break;
        }
        ++res.iterations;
        const double own = fv[center] - penalty[center];
        std::size_t best = center;
        double best_val = own;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = fv[j] - penalty[j];
            if (v > best_val) {
                best = j;
                best_val = v;
            } else if (v == best_val && best == center && j != center && dist[j] > 0.0) {
                best = j;
            }
        }
        if (best == center) break;
        center = best;
    }

    res.maximizer = res.centers.back();
    res.perturbed_value = fv[res.maximizer] - penalty[res.maximizer];
    for (std::size_t i = 2; i < res.centers.size(); ++i)
        if (domain.candidates[res.centers[i]].time < domain.candidates[res.centers[i - 1]].time)
            res.center_times_monotone = false;
    return res;
}

VariationalCheck verify_borwein_preiss(const VariationalResult& result, const PathObjective& f,
                                       const PairPenalty& rho, double epsilon,
                                       const SearchDomain& domain) {
    VariationalCheck chk;
    const TimedPath& xhat = domain.candidates[result.maximizer];
    auto penalized = [&](const TimedPath& y) {
        double p = 0.0;
        for (std::size_t i = 0; i < result.centers.size(); ++i)
            p += result.weights[i] * rho(y, domain.candidates[result.centers[i]]);
        return f(y) - p;
    };

    const double delta0 = result.weights.front();
    chk.distance_bounds = true;
    for (std::size_t i = 0; i < result.centers.size(); ++i) {
        const double bound = epsilon / (std::ldexp(1.0, static_cast<int>(i)) * delta0);
        if (rho(xhat, domain.candidates[result.centers[i]]) > bound) chk.distance_bounds = false;
    }
    const double top = penalized(xhat);
    chk.value_bound = top >= f(domain.candidates[result.centers.front()]);

    chk.strict_margin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < domain.size(); ++j) {
        if (j == result.maximizer) continue;
        const TimedPath& y = domain.candidates[j];
        if (rho(y, xhat) == 0.0) {
            ++chk.duplicates;
            continue;
        }
        chk.strict_margin = std::min(chk.strict_margin, top - penalized(y));
    }
    chk.strict_max = chk.strict_margin > 0.0;
    return chk;
}

SearchDomain random_domain(std::uint64_t seed, std::size_t index, std::size_t size) {
    SearchDomain dom;
    RandomPathSpec spec;
    spec.nodes = 16;
    dom.candidates.reserve(size);
    for (std::size_t j = 0; j < size; ++j) {
        RandomStream rng(seed, StreamTag::domain, index, j);
        const double t = rng.uniform(0.0, 2.0);
        dom.candidates.emplace_back(t, random_path(rng, spec));
    }
    return dom;
}

SearchDomain read_domain_csv(std::istream& in) {
    SearchDomain dom;
    std::string line;
    std::string current_id;
    double current_time = 0.0;
    std::stringstream block;
    int dim = -1;
    bool header_seen = false;
    auto flush = [&] {
        if (current_id.empty()) return;
        std::stringstream path_csv;
        path_csv << "theta";
        for (int i = 0; i < dim; ++i) path_csv << ",v" << (i + 1);
        path_csv << '\n' << block.str();
        dom.candidates.emplace_back(current_time, read_path_csv(path_csv));
        block.str("");
        block.clear();
    };
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header_seen) {
            if (cells.size() < 4 || cells[0] != "candidate" || cells[1] != "time" || cells[2] != "theta")
                throw std::runtime_error("domain csv: header must be candidate,time,theta,v1,...");
            dim = static_cast<int>(cells.size()) - 3;
            header_seen = true;
            continue;
        }
        if (static_cast<int>(cells.size()) != dim + 3) throw std::runtime_error("domain csv: ragged row: " + line);
        if (cells[0] != current_id) {
            flush();
            current_id = cells[0];
            current_time = std::stod(cells[1]);
        }
        for (std::size_t k = 2; k < cells.size(); ++k) block << (k > 2 ? "," : "") << cells[k];
        block << '\n';
    }
    flush();
    if (!header_seen) throw std::runtime_error("domain csv: missing header");
    dom.validate();
    return dom;
}

void write_domain_csv(std::ostream& out, const SearchDomain& domain) {
    domain.validate();
    const int d = domain.candidates.front().path.dim();
    out << "candidate,time,theta";
    for (int i = 0; i < d; ++i) out << ",v" << (i + 1);
    out << '\n' << std::setprecision(17);
    for (std::size_t c = 0; c < domain.size(); ++c) {
        const auto& p = domain.candidates[c];
        auto row = [&](double theta, const Eigen::VectorXd& v) {
            out << c << ',' << p.time << ',' << theta;
            for (int i = 0; i < d; ++i) out << ',' << v[i];
            out << '\n';
        };
        for (std::size_t j = 0; j < p.path.size(); ++j) {
            if (p.path.left(j) != p.path.right(j)) row(p.path.nodes()[j], p.path.left(j));
            row(p.path.nodes()[j], p.path.right(j));
        }
    }
}

PathObjective named_objective(const std::string& name) {
    if (name == "tip")
        return [](const TimedPath& p) { return p.path.tip()[0] - p.time * p.time; };
    if (name == "neg-sup")
        return [](const TimedPath& p) { return -p.path.sup_norm(); };
    if (name == "tip-minus-sup")
        return [](const TimedPath& p) { return p.path.tip()[0] - 0.5 * p.path.sup_norm() - 0.1 * p.time; };
    throw std::invalid_argument("unknown objective '" + name + "' (tip, neg-sup, tip-minus-sup)");
}

}  // namespace delayhjb
