#pragma once

// Straightforward reference implementations used to check the library. They
// favour obviousness over speed and share no code with src/.

#include "recoseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

namespace oracle {

using Table = std::vector<std::vector<double>>;

/// Mean over heads and the three branches of the pairwise cosine (or raw
/// dot product) between token rows, one scalar at a time.
inline Table correlation(const recoseg::HeadProjections& p, bool cosine) {
    const int heads = p.heads();
    const int n = static_cast<int>(p.tokens());
    const int d = static_cast<int>(p.head_dim());
    Table w(n, std::vector<double>(n, 0.0));
    for (const auto* branch : {&p.q, &p.k, &p.v}) {
        for (int h = 0; h < heads; ++h) {
            const auto& x = (*branch)[h];
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    double dot = 0, ni = 0, nj = 0;
                    for (int c = 0; c < d; ++c) {
                        dot += double(x(i, c)) * double(x(j, c));
                        ni += double(x(i, c)) * double(x(i, c));
                        nj += double(x(j, c)) * double(x(j, c));
                    }
                    if (cosine) dot /= std::max(std::sqrt(ni), 1e-8) * std::max(std::sqrt(nj), 1e-8);
                    w[i][j] += dot;
                }
            }
        }
    }
    for (auto& row : w)
        for (auto& x : row) x /= 3.0 * heads;
    return w;
}

/// Density-based clustering by connected components: core points within eps
/// of each other are merged with union-find, components are numbered by their
/// smallest member, and a border point belongs to the lowest-numbered
/// component among the cores that reach it. Noise is -1.
inline std::vector<int> dbscan(const recoseg::Matrix& pts, double eps, int min_samples) {
    const int n = static_cast<int>(pts.rows());
    auto dist = [&](int a, int b) {
        double s = 0;
        for (Eigen::Index c = 0; c < pts.cols(); ++c) {
            const double t = double(pts(a, c)) - double(pts(b, c));
            s += t * t;
        }
        return std::sqrt(s);
    };
    std::vector<std::vector<bool>> near(n, std::vector<bool>(n));
    std::vector<bool> core(n);
    for (int a = 0; a < n; ++a) {
        int count = 0;
        for (int b = 0; b < n; ++b) {
            near[a][b] = dist(a, b) <= eps;
            count += near[a][b];
        }
        core[a] = count >= min_samples;
    }
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (core[a] && core[b] && near[a][b]) parent[find(a)] = find(b);

    std::map<int, int> smallest;  // root -> smallest core index
    for (int a = 0; a < n; ++a)
        if (core[a] && !smallest.count(find(a))) smallest[find(a)] = a;
    std::vector<std::pair<int, int>> order;
    for (auto [root, first] : smallest) order.push_back({first, root});
    std::sort(order.begin(), order.end());
    std::map<int, int> label_of_root;
    for (size_t i = 0; i < order.size(); ++i) label_of_root[order[i].second] = static_cast<int>(i);

    std::vector<int> labels(n, -1);
    for (int a = 0; a < n; ++a) {
        if (core[a]) {
            labels[a] = label_of_root[find(a)];
            continue;
        }
        for (int b = 0; b < n; ++b) {
            if (core[b] && near[a][b]) {
                const int l = label_of_root[find(b)];
                if (labels[a] < 0 || l < labels[a]) labels[a] = l;
            }
        }
    }
    return labels;
}

/// True when two labelings agree on noise and induce the same partition.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        auto x = ab.try_emplace(a[i], b[i]).first;
        auto y = ba.try_emplace(b[i], a[i]).first;
        if (x->second != b[i] || y->second != a[i]) return false;
    }
    return true;
}

/// Per-pixel confusion counts.
inline std::vector<std::vector<long>> confusion(const std::vector<int>& gt, const std::vector<int>& pred, int classes,
                                                int ignore) {
    std::vector<std::vector<long>> c(classes, std::vector<long>(classes, 0));
    for (size_t i = 0; i < gt.size(); ++i)
        if (gt[i] != ignore) ++c[gt[i]][pred[i]];
    return c;
}

}  // namespace oracle
