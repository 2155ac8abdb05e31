#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "spl/error.hpp"
#include "spl/parallel.hpp"
#include "spl/quadrature.hpp"

// Hierarchical evaluation of the Gagliardo pair sum
//
//   sum_{i != j} w_i w_j |u_i - u_j|^p / |x_i - x_j|^q
//
// on large weighted clouds. Nodes of a k-d tree that are well separated interact through the
// kernel at their centroids (with the second-order moment correction) and through quantized value
// histograms; everything else is summed exactly. Histogram bins keep their weighted mean value, so
// the first-order quantization error cancels.

namespace spl {

struct TreecodeOptions {
    double separation = 3.0;          // far field when |c_A - c_B| >= separation * (r_A + r_B)
    std::size_t leaf_size = 32;
    double quantum_fraction = 1.0 / 64.0; // value bin width relative to the value range
    std::size_t max_bins = 4096;      // nodes with more bins never use the far field
};

namespace detail {

inline double pair_term(double d2, double v2, double half_p, double half_q) {
    if (v2 == 0.0 || d2 == 0.0) return 0.0;
    return std::exp(half_p * std::log(v2) - half_q * std::log(d2));
}

class PairTree {
public:
    PairTree(const QuadratureMap& q, double p, double kernel_power, const TreecodeOptions& opt)
        : dim_(q.dim), nu_(q.nu), half_p_(0.5 * p), p_(p), kq_(kernel_power), opt_(opt) {
        require(nu_ >= 1 && nu_ <= 4, ErrorKind::configuration, "treecode supports value dimension 1..4");
        const std::size_t n = q.size();
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        pts_ = q.points;
        wts_ = q.weights;
        vals_ = q.values;
        vmin_.assign(nu_, std::numeric_limits<double>::infinity());
        double vmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < nu_; ++c) {
                vmin_[c] = std::min(vmin_[c], q.values[i * nu_ + c]);
                vmax = std::max(vmax, q.values[i * nu_ + c]);
            }
        double range = 0.0;
        for (std::size_t c = 0; c < nu_; ++c) range = std::max(range, vmax - vmin_[c]);
        quantum_ = range > 0.0 ? range * opt_.quantum_fraction : 1.0;
        if (n == 0) return;
        build(perm, 0, n);
        // reorder data along the permutation for locality
        std::vector<double> p2(n * dim_), w2(n), v2(n * nu_);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = perm[k];
            std::copy_n(&q.points[i * dim_], dim_, &p2[k * dim_]);
            w2[k] = q.weights[i];
            std::copy_n(&q.values[i * nu_], nu_, &v2[k * nu_]);
        }
        pts_ = std::move(p2);
        wts_ = std::move(w2);
        vals_ = std::move(v2);
        for (auto& node : nodes_) finish_node(node);
        build_histograms(0);
    }

    double sum(int workers) const {
        if (nodes_.empty()) return 0.0;
        std::vector<Item> items;
        self(0, items);
        constexpr std::size_t chunk = 64;
        const std::size_t tasks = (items.size() + chunk - 1) / chunk;
        return parallel_sum(
            tasks,
            [&](std::size_t t) {
                double acc = 0.0;
                const std::size_t end = std::min(items.size(), (t + 1) * chunk);
                for (std::size_t k = t * chunk; k < end; ++k) acc += evaluate(items[k]);
                return acc;
            },
            workers);
    }

private:
    struct Node {
        std::size_t begin = 0, end = 0;
        int left = -1, right = -1;
        std::array<double, 3> centroid{};
        std::array<double, 9> cov{};
        double radius = 0.0;
        double weight = 0.0;
        bool constant = false;
        std::size_t bin_begin = 0, bin_count = 0;
        bool has_bins = false;
    };

    enum class ItemKind : std::uint8_t { self_leaf, near, far };
    struct Item {
        ItemKind kind;
        std::uint32_t a, b;
    };

    int build(std::vector<std::size_t>& perm, std::size_t begin, std::size_t end) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{begin, end});
        if (end - begin <= opt_.leaf_size) return id;
        // split along the widest axis at the median
        std::size_t axis = 0;
        double widest = -1.0;
        for (std::size_t a = 0; a < dim_; ++a) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t k = begin; k < end; ++k) {
                const double x = pts_[perm[k] * dim_ + a];
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            if (hi - lo > widest) {
                widest = hi - lo;
                axis = a;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(mid),
                         perm.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t i, std::size_t j) {
                             const double xi = pts_[i * dim_ + axis], xj = pts_[j * dim_ + axis];
                             return xi < xj || (xi == xj && i < j);
                         });
        const int left = build(perm, begin, mid);
        const int right = build(perm, mid, end);
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    void finish_node(Node& node) const {
        double w = 0.0;
        std::array<double, 3> c{};
        for (std::size_t k = node.begin; k < node.end; ++k) {
            w += wts_[k];
            for (std::size_t a = 0; a < dim_; ++a) c[a] += wts_[k] * pts_[k * dim_ + a];
        }
        for (std::size_t a = 0; a < dim_; ++a) c[a] /= w;
        std::array<double, 9> cov{};
        double r2 = 0.0;
        bool constant = true;
        for (std::size_t k = node.begin; k < node.end; ++k) {
            double d2 = 0.0;
            for (std::size_t a = 0; a < dim_; ++a) {
                const double da = pts_[k * dim_ + a] - c[a];
                d2 += da * da;
                for (std::size_t b = 0; b < dim_; ++b) cov[a * 3 + b] += wts_[k] * da * (pts_[k * dim_ + b] - c[b]);
            }
            r2 = std::max(r2, d2);
            for (std::size_t v = 0; v < nu_ && constant; ++v)
                if (vals_[k * nu_ + v] != vals_[node.begin * nu_ + v]) constant = false;
        }
        for (double& x : cov) x /= w;
        node.weight = w;
        node.centroid = c;
        node.cov = cov;
        node.radius = std::sqrt(r2);
        node.constant = constant;
    }

    std::uint64_t key_of(std::size_t k) const {
        std::uint64_t key = 0;
        for (std::size_t c = 0; c < nu_; ++c) {
            const auto cell = static_cast<std::uint64_t>(std::floor((vals_[k * nu_ + c] - vmin_[c]) / quantum_));
            key = (key << 16) | (cell & 0xFFFFU);
        }
        return key;
    }

    void build_histograms(int id) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.left < 0) {
            std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
            keyed.reserve(node.end - node.begin);
            for (std::size_t k = node.begin; k < node.end; ++k) keyed.emplace_back(key_of(k), k);
            std::sort(keyed.begin(), keyed.end());
            const std::size_t start = bin_keys_.size();
            for (std::size_t t = 0; t < keyed.size();) {
                std::size_t u = t;
                double w = 0.0;
                std::array<double, 4> acc{};
                while (u < keyed.size() && keyed[u].first == keyed[t].first) {
                    const std::size_t k = keyed[u].second;
                    w += wts_[k];
                    for (std::size_t c = 0; c < nu_; ++c) acc[c] += wts_[k] * vals_[k * nu_ + c];
                    ++u;
                }
                push_bin(keyed[t].first, w, acc);
                t = u;
            }
            Node& n2 = nodes_[static_cast<std::size_t>(id)];
            n2.bin_begin = start;
            n2.bin_count = bin_keys_.size() - start;
            n2.has_bins = true;
            return;
        }
        build_histograms(node.left);
        build_histograms(nodes_[static_cast<std::size_t>(id)].right);
        const Node& l = nodes_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(id)].left)];
        const Node& r = nodes_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(id)].right)];
        if (!l.has_bins || !r.has_bins || l.bin_count + r.bin_count > 2 * opt_.max_bins) return;
        const std::size_t start = bin_keys_.size();
        std::size_t i = l.bin_begin, ie = l.bin_begin + l.bin_count;
        std::size_t j = r.bin_begin, je = r.bin_begin + r.bin_count;
        auto sums = [&](std::size_t b) {
            std::array<double, 4> s{};
            for (std::size_t c = 0; c < nu_; ++c) s[c] = bin_mean_[b * nu_ + c] * bin_weight_[b];
            return s;
        };
        while (i < ie || j < je) {
            if (j >= je || (i < ie && bin_keys_[i] < bin_keys_[j])) {
                push_bin(bin_keys_[i], bin_weight_[i], sums(i));
                ++i;
            } else if (i >= ie || bin_keys_[j] < bin_keys_[i]) {
                push_bin(bin_keys_[j], bin_weight_[j], sums(j));
                ++j;
            } else {
                auto s = sums(i);
                const auto t = sums(j);
                for (std::size_t c = 0; c < nu_; ++c) s[c] += t[c];
                push_bin(bin_keys_[i], bin_weight_[i] + bin_weight_[j], s);
                ++i;
                ++j;
            }
        }
        Node& n2 = nodes_[static_cast<std::size_t>(id)];
        n2.bin_begin = start;
        n2.bin_count = bin_keys_.size() - start;
        n2.has_bins = n2.bin_count <= opt_.max_bins;
    }

    void push_bin(std::uint64_t key, double w, const std::array<double, 4>& weighted_sum) {
        bin_keys_.push_back(key);
        bin_weight_.push_back(w);
        for (std::size_t c = 0; c < nu_; ++c) bin_mean_.push_back(weighted_sum[c] / w);
    }

    const Node& node(std::uint32_t id) const { return nodes_[id]; }

    static bool is_leaf(const Node& n) { return n.left < 0; }

    void self(std::uint32_t id, std::vector<Item>& items) const {
        const Node& n = node(id);
        if (n.constant) return;
        if (is_leaf(n)) {
            items.push_back({ItemKind::self_leaf, id, id});
            return;
        }
        const auto l = static_cast<std::uint32_t>(n.left), r = static_cast<std::uint32_t>(n.right);
        self(l, items);
        self(r, items);
        pair(l, r, items);
    }

    bool same_constant(const Node& a, const Node& b) const {
        if (!a.constant || !b.constant) return false;
        for (std::size_t c = 0; c < nu_; ++c)
            if (vals_[a.begin * nu_ + c] != vals_[b.begin * nu_ + c]) return false;
        return true;
    }

    void pair(std::uint32_t ia, std::uint32_t ib, std::vector<Item>& items) const {
        const Node& a = node(ia);
        const Node& b = node(ib);
        if (same_constant(a, b)) return;
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) d2 += (a.centroid[k] - b.centroid[k]) * (a.centroid[k] - b.centroid[k]);
        const double reach = opt_.separation * (a.radius + b.radius);
        if (a.has_bins && b.has_bins && d2 >= reach * reach && d2 > 0.0) {
            items.push_back({ItemKind::far, ia, ib});
            return;
        }
        if (is_leaf(a) && is_leaf(b)) {
            items.push_back({ItemKind::near, ia, ib});
            return;
        }
        const bool split_a = !is_leaf(a) && (is_leaf(b) || a.radius >= b.radius);
        if (split_a) {
            pair(static_cast<std::uint32_t>(a.left), ib, items);
            pair(static_cast<std::uint32_t>(a.right), ib, items);
        } else {
            pair(ia, static_cast<std::uint32_t>(b.left), items);
            pair(ia, static_cast<std::uint32_t>(b.right), items);
        }
    }

    double value_dist2(std::size_t i, std::size_t j) const {
        double v2 = 0.0;
        for (std::size_t c = 0; c < nu_; ++c) {
            const double dv = vals_[i * nu_ + c] - vals_[j * nu_ + c];
            v2 += dv * dv;
        }
        return v2;
    }

    double point_dist2(std::size_t i, std::size_t j) const {
        double d2 = 0.0;
        for (std::size_t a = 0; a < dim_; ++a) {
            const double dx = pts_[i * dim_ + a] - pts_[j * dim_ + a];
            d2 += dx * dx;
        }
        return d2;
    }

    double evaluate(const Item& item) const {
        const double half_q = 0.5 * kq_;
        const Node& a = node(item.a);
        const Node& b = node(item.b);
        switch (item.kind) {
        case ItemKind::self_leaf: {
            double acc = 0.0;
            for (std::size_t i = a.begin; i < a.end; ++i)
                for (std::size_t j = i + 1; j < a.end; ++j)
                    acc += wts_[i] * wts_[j] * pair_term(point_dist2(i, j), value_dist2(i, j), half_p_, half_q);
            return 2.0 * acc;
        }
        case ItemKind::near: {
            double acc = 0.0;
            for (std::size_t i = a.begin; i < a.end; ++i)
                for (std::size_t j = b.begin; j < b.end; ++j)
                    acc += wts_[i] * wts_[j] * pair_term(point_dist2(i, j), value_dist2(i, j), half_p_, half_q);
            return 2.0 * acc;
        }
        case ItemKind::far: {
            std::array<double, 3> z{};
            double z2 = 0.0;
            for (std::size_t k = 0; k < dim_; ++k) {
                z[k] = a.centroid[k] - b.centroid[k];
                z2 += z[k] * z[k];
            }
            // E[K(z + xi_a - xi_b)] to second order, K(z) = |z|^{-q}
            const double kz = std::pow(z2, -half_q);
            double zcz = 0.0, trc = 0.0;
            for (std::size_t r = 0; r < dim_; ++r) {
                trc += a.cov[r * 3 + r] + b.cov[r * 3 + r];
                for (std::size_t c = 0; c < dim_; ++c) zcz += z[r] * (a.cov[r * 3 + c] + b.cov[r * 3 + c]) * z[c];
            }
            const double kernel = kz * (1.0 + 0.5 * kq_ * ((kq_ + 2.0) * zcz / z2 - trc) / z2);
            double acc = 0.0;
            for (std::size_t i = a.bin_begin; i < a.bin_begin + a.bin_count; ++i)
                for (std::size_t j = b.bin_begin; j < b.bin_begin + b.bin_count; ++j) {
                    double v2 = 0.0;
                    for (std::size_t c = 0; c < nu_; ++c) {
                        const double dv = bin_mean_[i * nu_ + c] - bin_mean_[j * nu_ + c];
                        v2 += dv * dv;
                    }
                    if (v2 > 0.0) acc += bin_weight_[i] * bin_weight_[j] * std::pow(v2, half_p_);
                }
            return 2.0 * kernel * acc;
        }
        }
        return 0.0;
    }

    std::size_t dim_, nu_;
    double half_p_, p_, kq_;
    TreecodeOptions opt_;
    std::vector<double> pts_, wts_, vals_;
    std::vector<double> vmin_;
    double quantum_ = 1.0;
    std::vector<Node> nodes_;
    std::vector<std::uint64_t> bin_keys_;
    std::vector<double> bin_weight_;
    std::vector<double> bin_mean_;
};

} // namespace detail

/// Tree-accelerated sum over ordered pairs i != j of w_i w_j |u_i - u_j|^p / |x_i - x_j|^kernel_power.
inline double treecode_pair_sum(const QuadratureMap& q, double p, double kernel_power, const TreecodeOptions& opt,
                                int workers) {
    detail::PairTree tree(q, p, kernel_power, opt);
    return tree.sum(workers);
}

} // namespace spl
