#include "delayhjb/path.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace delayhjb {

namespace {

double norm_of(const double* v, int dim) {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

// Index j of the segment [theta_j, theta_{j+1}) containing theta; size()-1
// when theta == 0.
std::size_t locate(const PathView& x, double theta) {
    std::size_t lo = 0;
    std::size_t hi = x.size() - 1;
    if (theta >= x.node_time(hi)) return hi;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (x.node_time(mid) <= theta)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace

double exp_segment_weight(double rate, double len, double p, double q) {
    if (len <= 0.0) return 0.0;
    if (rate == 0.0) return 0.5 * (p + q) * len;
    const double rl = rate * len;
    const double e0 = std::expm1(rl) / rate;
    const double e1_over_len = (std::exp(rl) - std::expm1(rl) / rl) / rate;
    return p * e0 + (q - p) * e1_over_len;
}

std::string to_string(Regularity r) {
    return r == Regularity::continuous ? "continuous" : "cadlag";
}

PathView::PathView(std::span<const double> times, std::span<const double> left,
                   std::span<const double> right, std::span<const double> prefix_sup,
                   double origin, int dim)
    : times_(times), left_(left), right_(right), prefix_sup_(prefix_sup),
      origin_(origin), dim_(dim) {}

Eigen::VectorXd PathView::value_at(double theta) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    if (theta > 0.0) throw std::invalid_argument("value_at: theta must be <= 0");
    if (theta < node_time(0)) return out;
    const std::size_t j = locate(*this, theta);
    if (j == size() - 1 || theta == node_time(j)) {
        for (int i = 0; i < dim_; ++i) out[i] = right(j)[i];
        return out;
    }
    const double a = node_time(j);
    const double b = node_time(j + 1);
    const double w = (theta - a) / (b - a);
    for (int i = 0; i < dim_; ++i)
        out[i] = (1.0 - w) * right(j)[i] + w * left(j + 1)[i];
    return out;
}

Eigen::VectorXd PathView::left_limit_at(double theta) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    if (theta <= node_time(0)) return out;
    const std::size_t j = locate(*this, theta);
    if (theta == node_time(j)) {
        for (int i = 0; i < dim_; ++i) out[i] = left(j)[i];
        return out;
    }
    return value_at(theta);
}

double PathView::sup_norm_open() const {
    const std::size_t k = size() - 1;
    const double at_zero = norm_of(left(k), dim_);
    if (k == 0) return at_zero;
    return std::max(prefix_sup_[k - 1], at_zero);
}

bool PathView::is_continuous() const {
    for (std::size_t j = 0; j < size(); ++j)
        for (int i = 0; i < dim_; ++i)
            if (left(j)[i] != right(j)[i]) return false;
    return true;
}

double PathView::exp_integral(double rate, int coord) const {
    if (exp_cache_ != nullptr && rate == exp_rate_)
        return exp_cache_[(size() - 1) * dim_ + coord];
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < size(); ++j) {
        const double a = node_time(j);
        const double len = node_time(j + 1) - a;
        acc += std::exp(rate * a) *
               exp_segment_weight(rate, len, right(j)[coord], left(j + 1)[coord]);
    }
    return acc;
}

HistoryPath::HistoryPath(std::vector<double> nodes, std::vector<double> left,
                         std::vector<double> right, int dim)
    : nodes_(std::move(nodes)), left_(std::move(left)), right_(std::move(right)),
      dim_(dim) {
    validate();
    build_prefix_sup();
}

void HistoryPath::validate() const {
    if (dim_ <= 0) throw std::invalid_argument("HistoryPath: dimension must be positive");
    if (nodes_.size() < 2)
        throw std::invalid_argument("HistoryPath: need at least the nodes -T_h and 0");
    if (left_.size() != nodes_.size() * dim_ || right_.size() != nodes_.size() * dim_)
        throw std::invalid_argument("HistoryPath: value storage does not match nodes");
    if (nodes_.back() != 0.0) throw std::invalid_argument("HistoryPath: last node must be 0");
    if (!(nodes_.front() < 0.0))
        throw std::invalid_argument("HistoryPath: left horizon must be positive");
    for (std::size_t j = 1; j < nodes_.size(); ++j)
        if (!(nodes_[j] > nodes_[j - 1]))
            throw std::invalid_argument("HistoryPath: nodes must be strictly increasing");
    for (int i = 0; i < dim_; ++i)
        if (left_[i] != 0.0 || right_[i] != 0.0)
            throw std::invalid_argument("HistoryPath: value at -T_h must be zero");
    for (std::size_t k = 0; k < left_.size(); ++k)
        if (!std::isfinite(left_[k]) || !std::isfinite(right_[k]))
            throw std::invalid_argument("HistoryPath: non-finite value");
}

void HistoryPath::build_prefix_sup() {
    prefix_sup_.resize(nodes_.size());
    double running = 0.0;
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
        running = std::max({running, norm_of(left_.data() + j * dim_, dim_),
                            norm_of(right_.data() + j * dim_, dim_)});
        prefix_sup_[j] = running;
    }
}

HistoryPath HistoryPath::zero(int dim, double left_horizon) {
    if (!(left_horizon > 0.0)) throw std::invalid_argument("zero path: left horizon must be positive");
    std::vector<double> v(2 * static_cast<std::size_t>(dim), 0.0);
    return HistoryPath({-left_horizon, 0.0}, v, v, dim);
}

HistoryPath HistoryPath::piecewise_linear(std::vector<double> nodes,
                                          const std::vector<Eigen::VectorXd>& values) {
    if (values.empty() || values.size() != nodes.size())
        throw std::invalid_argument("piecewise_linear: nodes and values differ in length");
    const int dim = static_cast<int>(values.front().size());
    std::vector<double> flat;
    flat.reserve(values.size() * dim);
    for (const auto& v : values) {
        if (v.size() != dim) throw std::invalid_argument("piecewise_linear: ragged values");
        flat.insert(flat.end(), v.data(), v.data() + dim);
    }
    return HistoryPath(std::move(nodes), flat, flat, dim);
}

HistoryPath HistoryPath::piecewise_constant(std::vector<double> nodes,
                                            const std::vector<Eigen::VectorXd>& values) {
    if (values.empty() || values.size() != nodes.size())
        throw std::invalid_argument("piecewise_constant: nodes and values differ in length");
    const int dim = static_cast<int>(values.front().size());
    std::vector<double> left;
    std::vector<double> right;
    left.reserve(values.size() * dim);
    right.reserve(values.size() * dim);
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (values[j].size() != dim) throw std::invalid_argument("piecewise_constant: ragged values");
        const auto& prev = j == 0 ? values[0] : values[j - 1];
        left.insert(left.end(), prev.data(), prev.data() + dim);
        right.insert(right.end(), values[j].data(), values[j].data() + dim);
    }
    return HistoryPath(std::move(nodes), std::move(left), std::move(right), dim);
}

HistoryPath HistoryPath::piecewise_linear_1d(std::vector<double> nodes,
                                             const std::vector<double>& values) {
    return HistoryPath(std::move(nodes), values, values, 1);
}

PathView HistoryPath::view() const {
    return PathView(nodes_, left_, right_, prefix_sup_, 0.0, dim_);
}

Regularity HistoryPath::regularity() const {
    return left_ == right_ ? Regularity::continuous : Regularity::cadlag;
}

HistoryPath HistoryPath::bumped(int coord, double h) const {
    if (coord < 0 || coord >= dim_) throw std::out_of_range("bumped: coordinate out of range");
    Eigen::VectorXd jump = Eigen::VectorXd::Zero(dim_);
    jump[coord] = h;
    return bumped(jump);
}

HistoryPath HistoryPath::bumped(const Eigen::VectorXd& jump) const {
    if (jump.size() != dim_) throw std::invalid_argument("bumped: dimension mismatch");
    std::vector<double> right = right_;
    const std::size_t k = size() - 1;
    for (int i = 0; i < dim_; ++i) right[k * dim_ + i] += jump[i];
    return HistoryPath(nodes_, left_, std::move(right), dim_);
}

HistoryPath HistoryPath::scaled(double factor) const {
    std::vector<double> l = left_;
    std::vector<double> r = right_;
    for (auto& v : l) v *= factor;
    for (auto& v : r) v *= factor;
    return HistoryPath(nodes_, std::move(l), std::move(r), dim_);
}

HistoryPath materialize(const PathView& x) {
    const int d = x.dim();
    std::vector<double> nodes(x.size());
    std::vector<double> left(x.size() * d);
    std::vector<double> right(x.size() * d);
    for (std::size_t j = 0; j < x.size(); ++j) {
        nodes[j] = x.node_time(j);
        std::copy_n(x.left(j), d, left.begin() + j * d);
        std::copy_n(x.right(j), d, right.begin() + j * d);
    }
    // Absolute-time buffers can leave the last node a rounding error away from 0.
    nodes.back() = 0.0;
    return HistoryPath(std::move(nodes), std::move(left), std::move(right), d);
}

TimedPath::TimedPath(double t, HistoryPath x) : time(t), path(std::move(x)) {
    if (!(t >= 0.0)) throw std::invalid_argument("TimedPath: time must be non-negative");
}

double sup_norm(const HistoryPath& x) { return x.sup_norm(); }

HistoryPath shift(const HistoryPath& x, double h) {
    if (!(h >= 0.0)) throw std::invalid_argument("shift: h must be non-negative");
    if (h == 0.0) return x;
    const int d = x.dim();
    const std::size_t k = x.size();
    std::vector<double> nodes(k + 1);
    std::vector<double> left(x.size() * d + d);
    std::vector<double> right(x.size() * d + d);
    for (std::size_t j = 0; j < k; ++j) {
        nodes[j] = x.nodes()[j] - h;
        for (int i = 0; i < d; ++i) {
            left[j * d + i] = x.left(j)[i];
            right[j * d + i] = x.right(j)[i];
        }
    }
    nodes[k] = 0.0;
    for (int i = 0; i < d; ++i) {
        left[k * d + i] = x.right(k - 1)[i];
        right[k * d + i] = x.right(k - 1)[i];
    }
    return HistoryPath(std::move(nodes), std::move(left), std::move(right), d);
}

namespace {

template <typename Op>
HistoryPath combine(const HistoryPath& x, const HistoryPath& y, Op op) {
    if (x.dim() != y.dim()) throw std::invalid_argument("path dimension mismatch");
    const int d = x.dim();
    std::vector<double> nodes;
    nodes.reserve(x.size() + y.size());
    std::merge(x.nodes().begin(), x.nodes().end(), y.nodes().begin(), y.nodes().end(),
               std::back_inserter(nodes));
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    const PathView xv = x.view();
    const PathView yv = y.view();
    std::vector<double> left(nodes.size() * d);
    std::vector<double> right(nodes.size() * d);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const Eigen::VectorXd l = op(xv.left_limit_at(nodes[j]), yv.left_limit_at(nodes[j]));
        const Eigen::VectorXd r = op(xv.value_at(nodes[j]), yv.value_at(nodes[j]));
        std::copy_n(l.data(), d, left.begin() + j * d);
        std::copy_n(r.data(), d, right.begin() + j * d);
    }
    return HistoryPath(std::move(nodes), std::move(left), std::move(right), d);
}

}  // namespace

HistoryPath difference(const HistoryPath& x, const HistoryPath& y) {
    return combine(x, y, [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return Eigen::VectorXd(a - b);
    });
}

HistoryPath sum(const HistoryPath& x, const HistoryPath& y) {
    return combine(x, y, [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return Eigen::VectorXd(a + b);
    });
}

double sup_distance(const HistoryPath& x, const HistoryPath& y) {
    return difference(x, y).sup_norm();
}

double d_infinity(const TimedPath& a, const TimedPath& b) {
    const TimedPath& early = a.time <= b.time ? a : b;
    const TimedPath& late = a.time <= b.time ? b : a;
    const double gap = late.time - early.time;
    return gap + sup_distance(shift(early.path, gap), late.path);
}

double norm1_distance(const TimedPath& a, const TimedPath& b) {
    return std::abs(a.time - b.time) + sup_distance(a.path, b.path);
}

HistoryPath aligned_difference(const TimedPath& a, const TimedPath& b) {
    const double gap = b.time - a.time;
    return difference(shift(a.path, std::max(gap, 0.0)), shift(b.path, std::max(-gap, 0.0)));
}

void write_path_csv(std::ostream& out, const HistoryPath& x) {
    const int d = x.dim();
    out << "# regularity=" << to_string(x.regularity()) << '\n';
    out << "# left_horizon=" << std::setprecision(17) << x.left_horizon() << '\n';
    out << "# dim=" << d << '\n';
    out << "theta";
    for (int i = 0; i < d; ++i) out << ",v" << (i + 1);
    out << '\n';
    auto row = [&](double theta, const Eigen::VectorXd& v) {
        out << std::setprecision(17) << theta;
        for (int i = 0; i < d; ++i) out << ',' << v[i];
        out << '\n';
    };
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x.left(j) != x.right(j)) row(x.nodes()[j], x.left(j));
        row(x.nodes()[j], x.right(j));
    }
}

HistoryPath read_path_csv(std::istream& in) {
    std::map<std::string, std::string> meta;
    std::vector<double> thetas;
    std::vector<std::vector<double>> rows;
    std::string line;
    bool header_seen = false;
    int dim = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            meta[key] = line.substr(eq + 1);
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header_seen) {
            header_seen = true;
            dim = static_cast<int>(cells.size()) - 1;
            if (dim < 1 || cells[0] != "theta")
                throw std::runtime_error("path csv: header must be theta,v1,...");
            continue;
        }
        if (static_cast<int>(cells.size()) != dim + 1)
            throw std::runtime_error("path csv: ragged row: " + line);
        thetas.push_back(std::stod(cells[0]));
        std::vector<double> v(dim);
        for (int i = 0; i < dim; ++i) v[i] = std::stod(cells[i + 1]);
        rows.push_back(std::move(v));
    }
    if (!header_seen || rows.empty()) throw std::runtime_error("path csv: no data rows");

    std::vector<double> nodes;
    std::vector<double> left;
    std::vector<double> right;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!nodes.empty() && thetas[r] == nodes.back()) {
            // second row at the same theta carries the right value
            std::copy(rows[r].begin(), rows[r].end(), right.end() - dim);
            continue;
        }
        nodes.push_back(thetas[r]);
        left.insert(left.end(), rows[r].begin(), rows[r].end());
        right.insert(right.end(), rows[r].begin(), rows[r].end());
    }
    HistoryPath path(std::move(nodes), std::move(left), std::move(right), dim);
    if (auto it = meta.find("regularity"); it != meta.end() && it->second != to_string(path.regularity()))
        throw std::runtime_error("path csv: regularity metadata disagrees with data");
    if (auto it = meta.find("left_horizon"); it != meta.end() &&
        std::abs(std::stod(it->second) - path.left_horizon()) > 1e-12 * path.left_horizon())
        throw std::runtime_error("path csv: left_horizon metadata disagrees with data");
    return path;
}

}  // namespace delayhjb
