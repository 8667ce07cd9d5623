#include "synthamt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace synthamt {

namespace {

// Min-cost max-cardinality bipartite matching by successive shortest
// augmenting paths (Bellman-Ford on the residual graph; costs are small and
// instances are note lists, so this is plenty).
std::vector<std::pair<size_t, size_t>>
min_cost_max_matching(size_t n_left, size_t n_right,
                      const std::vector<std::vector<std::pair<size_t, double>>>& adj) {
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<int> match_l(n_left, -1), match_r(n_right, -1);
    // cost[l][r] lookup
    std::vector<std::vector<double>> cost(n_left, std::vector<double>(n_right, INF));
    for (size_t l = 0; l < n_left; ++l)
        for (auto& [r, c] : adj[l]) cost[l][r] = c;

    while (true) {
        // nodes: left 0..nl-1, right nl..nl+nr-1, source implicit
        size_t N = n_left + n_right;
        std::vector<double> dist(N, INF);
        std::vector<int> prev(N, -1); // predecessor node
        for (size_t l = 0; l < n_left; ++l)
            if (match_l[l] < 0) dist[l] = 0.0;

        bool changed = true;
        while (changed) {
            changed = false;
            for (size_t l = 0; l < n_left; ++l) {
                if (dist[l] == INF) continue;
                for (auto& [r, c] : adj[l]) {
                    if (match_l[l] == int(r)) continue; // forward arcs only on unmatched edges
                    double nd = dist[l] + c;
                    if (nd < dist[n_left + r] - 1e-15) {
                        dist[n_left + r] = nd;
                        prev[n_left + r] = int(l);
                        changed = true;
                    }
                }
            }
            for (size_t r = 0; r < n_right; ++r) {
                if (dist[n_left + r] == INF || match_r[r] < 0) continue;
                size_t l = size_t(match_r[r]);
                double nd = dist[n_left + r] - cost[l][r]; // residual backward arc
                if (nd < dist[l] - 1e-15) {
                    dist[l] = nd;
                    prev[l] = int(n_left + r);
                    changed = true;
                }
            }
        }

        // cheapest free right node
        int best = -1;
        for (size_t r = 0; r < n_right; ++r) {
            if (match_r[r] >= 0 || dist[n_left + r] == INF) continue;
            if (best < 0 || dist[n_left + r] < dist[n_left + size_t(best)]) best = int(r);
        }
        if (best < 0) break;

        // augment: the path alternates left->right forward arcs and
        // right->left matched arcs; flip every forward arc on it
        int r = best;
        while (r >= 0) {
            int l = prev[n_left + size_t(r)];
            int pr = prev[size_t(l)]; // right node that fed l, or -1 if l was free
            match_r[size_t(r)] = l;
            match_l[size_t(l)] = r;
            r = pr >= 0 ? pr - int(n_left) : -1;
        }
    }

    std::vector<std::pair<size_t, size_t>> out;
    for (size_t l = 0; l < n_left; ++l)
        if (match_l[l] >= 0) out.emplace_back(l, size_t(match_l[l]));
    return out;
}

} // namespace

std::vector<std::pair<size_t, size_t>> match_notes(const NoteList& ref, const NoteList& est,
                                                   const MatchConfig& cfg, bool with_offset) {
    size_t nr = ref.notes.size(), ne = est.notes.size();
    std::vector<std::vector<std::pair<size_t, double>>> adj(nr);
    for (size_t i = 0; i < nr; ++i) {
        const NoteEvent& r = ref.notes[i];
        for (size_t j = 0; j < ne; ++j) {
            const NoteEvent& e = est.notes[j];
            if (r.pitch != e.pitch) continue;
            double onset_err = std::fabs(r.onset_s - e.onset_s);
            if (onset_err > cfg.onset_tol_s) continue;
            if (with_offset) {
                double tol = std::max(cfg.offset_tol_s, cfg.offset_ratio * (r.offset_s - r.onset_s));
                if (std::fabs(r.offset_s - e.offset_s) > tol) continue;
            }
            adj[i].emplace_back(j, onset_err);
        }
    }
    return min_cost_max_matching(nr, ne, adj);
}

PRF f_measure(size_t matched, size_t ref_count, size_t est_count) {
    PRF out;
    if (est_count > 0) out.precision = double(matched) / double(est_count);
    if (ref_count > 0) out.recall = double(matched) / double(ref_count);
    if (out.precision + out.recall > 0.0)
        out.f = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

double frame_accuracy(const NoteList& ref, const NoteList& est, double hop_s,
                      double duration_s) {
    if (duration_s <= 0.0) throw std::invalid_argument("frame_accuracy: duration must be positive");
    size_t frames = size_t(std::ceil(duration_s / hop_s));
    auto rasterize = [&](const NoteList& nl) {
        std::vector<bool> roll(frames * 128, false);
        for (const NoteEvent& n : nl.notes) {
            for (size_t k = 0; k < frames; ++k) {
                double center = (double(k) + 0.5) * hop_s;
                if (center >= n.onset_s && center < n.offset_s)
                    roll[k * 128 + size_t(n.pitch)] = true;
            }
        }
        return roll;
    };
    auto rr = rasterize(ref), er = rasterize(est);
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < rr.size(); ++i) {
        if (rr[i] && er[i]) tp++;
        else if (er[i]) fp++;
        else if (rr[i]) fn++;
    }
    size_t denom = tp + fp + fn;
    return denom == 0 ? 0.0 : double(tp) / double(denom);
}

EvalReport evaluate(const NoteList& ref, const NoteList& est, const MatchConfig& cfg) {
    EvalReport rep;
    rep.ref_count = ref.notes.size();
    rep.est_count = est.notes.size();
    auto m_off = match_notes(ref, est, cfg, true);
    auto m_non = match_notes(ref, est, cfg, false);
    rep.matched_with_offset = m_off.size();
    rep.matched_no_offset = m_non.size();
    rep.with_offset = f_measure(m_off.size(), rep.ref_count, rep.est_count);
    rep.no_offset = f_measure(m_non.size(), rep.ref_count, rep.est_count);
    rep.F = rep.with_offset.f;
    rep.Fn = rep.no_offset.f;
    double dur = std::max(ref.duration_s, est.duration_s);
    for (const NoteEvent& n : ref.notes) dur = std::max(dur, n.offset_s);
    for (const NoteEvent& n : est.notes) dur = std::max(dur, n.offset_s);
    rep.Ac = dur > 0.0 ? frame_accuracy(ref, est, cfg.frame_hop_s, dur) : 0.0;
    return rep;
}

} // namespace synthamt
