#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace delayhjb {

enum class Regularity { continuous, cadlag };

std::string to_string(Regularity r);

/// int_0^len e^{rate u} (p + (q - p) u / len) du
double exp_segment_weight(double rate, double len, double p, double q);

/// Non-owning view of a history on (-inf, 0].
///
/// The path is described on nodes theta_0 < ... < theta_K = 0 by a left limit
/// and a right value per node; on [theta_j, theta_{j+1}) it is linear from
/// right_j to left_{j+1}. Left of theta_0 it is identically zero.
///
/// Node times are stored as absolute times and shifted by `origin`, so a
/// prefix of a growing trajectory buffer is a valid view without copying.
class PathView {
public:
    PathView() = default;
    PathView(std::span<const double> times, std::span<const double> left,
             std::span<const double> right, std::span<const double> prefix_sup,
             double origin, int dim);

    int dim() const { return dim_; }
    std::size_t size() const { return times_.size(); }

    double node_time(std::size_t j) const { return times_[j] - origin_; }
    const double* left(std::size_t j) const { return left_.data() + j * dim_; }
    const double* right(std::size_t j) const { return right_.data() + j * dim_; }

    /// x(0)
    Eigen::Map<const Eigen::VectorXd> tip() const {
        return {right(size() - 1), dim_};
    }
    double tip(int coord) const { return right(size() - 1)[coord]; }

    double left_horizon() const { return -node_time(0); }

    Eigen::VectorXd value_at(double theta) const;
    Eigen::VectorXd left_limit_at(double theta) const;

    /// |x|_C, O(1) through the prefix-maximum table.
    double sup_norm() const { return prefix_sup_[size() - 1]; }
    /// sup over theta < 0 of |x(theta)|; includes the left limit at 0.
    double sup_norm_open() const;

    bool is_continuous() const;

    /// int_{-inf}^0 e^{rate * theta} x_coord(theta) d theta, exact for the
    /// segment-linear interpolant. Uses the attached cache when it matches.
    double exp_integral(double rate, int coord) const;

    void attach_exp_cache(const double* cache, double rate) {
        exp_cache_ = cache;
        exp_rate_ = rate;
    }

private:
    std::span<const double> times_;
    std::span<const double> left_;
    std::span<const double> right_;
    std::span<const double> prefix_sup_;
    double origin_ = 0.0;
    int dim_ = 0;
    const double* exp_cache_ = nullptr;
    double exp_rate_ = 0.0;
};

/// Discretized element of D_0 (or C_0 when continuous), truncated to
/// [-T_h, 0] with an exact zero value at -T_h.
class HistoryPath {
public:
    HistoryPath() = default;

    /// General constructor: left limits and right values per node (row-major,
    /// one d-vector per node).
    HistoryPath(std::vector<double> nodes, std::vector<double> left,
                std::vector<double> right, int dim);

    static HistoryPath zero(int dim, double left_horizon);
    /// Continuous piecewise-linear interpolant of (nodes, values).
    static HistoryPath piecewise_linear(std::vector<double> nodes,
                                        const std::vector<Eigen::VectorXd>& values);
    /// Right-continuous piecewise-constant path taking values[j] on
    /// [nodes[j], nodes[j+1]) and values.back() at 0.
    static HistoryPath piecewise_constant(std::vector<double> nodes,
                                          const std::vector<Eigen::VectorXd>& values);
    static HistoryPath piecewise_linear_1d(std::vector<double> nodes,
                                           const std::vector<double>& values);

    PathView view() const;

    int dim() const { return dim_; }
    std::size_t size() const { return nodes_.size(); }
    double left_horizon() const { return -nodes_.front(); }
    const std::vector<double>& nodes() const { return nodes_; }
    Eigen::Map<const Eigen::VectorXd> left(std::size_t j) const {
        return {left_.data() + j * dim_, dim_};
    }
    Eigen::Map<const Eigen::VectorXd> right(std::size_t j) const {
        return {right_.data() + j * dim_, dim_};
    }

    Regularity regularity() const;

    Eigen::VectorXd value_at(double theta) const { return view().value_at(theta); }
    Eigen::VectorXd tip() const { return right(size() - 1); }
    double sup_norm() const { return prefix_sup_.back(); }
    double sup_norm_open() const { return view().sup_norm_open(); }

    /// x + h e_i 1_{0}; the result has a jump at 0.
    HistoryPath bumped(int coord, double h) const;
    HistoryPath bumped(const Eigen::VectorXd& jump) const;

    HistoryPath scaled(double factor) const;

    bool operator==(const HistoryPath& other) const = default;

private:
    void validate() const;
    void build_prefix_sup();

    std::vector<double> nodes_;
    std::vector<double> left_;
    std::vector<double> right_;
    std::vector<double> prefix_sup_;
    int dim_ = 0;
};

/// HistoryPath from an arbitrary view (copies, re-bases node times on origin).
HistoryPath materialize(const PathView& x);

struct TimedPath {
    double time = 0.0;
    HistoryPath path;

    TimedPath() = default;
    TimedPath(double t, HistoryPath x);
};

double sup_norm(const HistoryPath& x);

/// x_h: freeze x(0) on [-h, 0] and translate the rest left by h.
HistoryPath shift(const HistoryPath& x, double h);

/// Pointwise x - y on the union of both node sets.
HistoryPath difference(const HistoryPath& x, const HistoryPath& y);
HistoryPath sum(const HistoryPath& x, const HistoryPath& y);

/// |x - y|_C without materializing the difference.
double sup_distance(const HistoryPath& x, const HistoryPath& y);

/// d_inf((s,x),(l,y)) = |l - s| + |x_{l-s} - y|_C for s <= l, symmetric.
double d_infinity(const TimedPath& a, const TimedPath& b);

/// |t - s| + |x - y|_C, no alignment shift.
double norm1_distance(const TimedPath& a, const TimedPath& b);

/// Aligned difference x_{(s-t) v 0} - y_{(t-s) v 0} used by the gauge family.
HistoryPath aligned_difference(const TimedPath& a, const TimedPath& b);

/// Path CSV: '# key=value' metadata lines (regularity, left_horizon, dim),
/// header row "theta,v1,...,vd", one row per node, two rows with the same
/// theta (left limit first) where the path jumps.
void write_path_csv(std::ostream& out, const HistoryPath& x);
HistoryPath read_path_csv(std::istream& in);

}  // namespace delayhjb
