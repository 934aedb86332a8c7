#pragma once

#include <string>
#include <vector>

#include "sparscene/bool_adjacency.hpp"
#include "sparscene/error.hpp"
#include "sparscene/scene.hpp"

namespace sparscene {

// Lane-graph traversal plan: an ordered sequence over {O, F}, where O expands
// one step along all lane-connectivity directions and F only along feasible
// forward-driving directions. The plan length is K.
struct ExpansionPlan {
    enum class Step : char { Omni = 'O', Forward = 'F' };
    std::vector<Step> steps;

    ExpansionPlan() = default;

    static ExpansionPlan parse(const std::string& text) {
        ExpansionPlan plan;
        plan.steps.reserve(text.size());
        for (char c : text) {
            if (c == 'O' || c == 'o') {
                plan.steps.push_back(Step::Omni);
            } else if (c == 'F' || c == 'f') {
                plan.steps.push_back(Step::Forward);
            } else {
                throw ConfigError("expansion plan '" + text + "': alphabet is {O, F}");
            }
        }
        return plan;
    }

    int depth() const { return static_cast<int>(steps.size()); }

    std::string str() const {
        std::string s;
        for (Step st : steps) s.push_back(static_cast<char>(st));
        return s;
    }
};

// Lane-to-lane adjacency from map connectivity. M_F holds only
// forward-driving edges (j -> i iff lane i is a successor of lane j); M_O adds
// the reversed edges, declared predecessors, and lateral neighbors in both
// directions, so M_F is a subset of M_O by construction.
struct LaneGraph {
    BoolAdjacency omni;
    BoolAdjacency forward;
};

inline LaneGraph build_l2l(const Scene& scene) {
    const int n = scene.num_lanes();
    const auto index = scene.lane_index();
    LaneGraph g{BoolAdjacency(n, n), BoolAdjacency(n, n)};
    auto lookup = [&](int64_t id, int64_t from) {
        auto it = index.find(id);
        if (it == index.end())
            throw DataError("lane " + std::to_string(from) + ": dangling lane id " +
                            std::to_string(id));
        return it->second;
    };
    for (int j = 0; j < n; ++j) {
        const LanePolyline& lane = scene.lanes[j];
        for (int64_t s : lane.successors) {
            const int i = lookup(s, lane.id);
            g.forward.add_edge(j, i);
            g.omni.add_edge(j, i);
            g.omni.add_edge(i, j);
        }
        for (int64_t p : lane.predecessors) {
            const int i = lookup(p, lane.id);
            g.omni.add_edge(j, i);
            g.omni.add_edge(i, j);
        }
        for (int64_t nb : lane.left_neighbors) {
            const int i = lookup(nb, lane.id);
            g.omni.add_edge(j, i);
            g.omni.add_edge(i, j);
        }
        for (int64_t nb : lane.right_neighbors) {
            const int i = lookup(nb, lane.id);
            g.omni.add_edge(j, i);
            g.omni.add_edge(i, j);
        }
    }
    return g;
}

// Agent-to-lane alignment: edge (agent i -> lane j) iff the distance from the
// agent's current position to lane j's polyline is strictly below r.
inline BoolAdjacency build_a2l(const Scene& scene, double radius) {
    if (!(radius > 0.0) && radius != 0.0)
        throw ConfigError("build_a2l: radius must be >= 0");
    BoolAdjacency a2l(scene.num_agents(), scene.num_lanes());
    if (radius <= 0.0) return a2l;
    for (int i = 0; i < scene.num_agents(); ++i) {
        const AgentState& s = scene.agents[i].current();
        const Vec2 p(s.x, s.y);
        for (int j = 0; j < scene.num_lanes(); ++j) {
            if (point_polyline_distance(p, scene.lanes[j].waypoints) < radius) {
                a2l.add_edge(i, j);
            }
        }
    }
    return a2l;
}

// Powers of the lane graph along the plan: M^(0) = I and
// M^(k) = M^(k-1) * step_k, products over the boolean semiring.
inline std::vector<BoolAdjacency> expand(const ExpansionPlan& plan, const BoolAdjacency& omni,
                                         const BoolAdjacency& forward) {
    if (omni.rows() != omni.cols() || forward.rows() != forward.cols() ||
        omni.rows() != forward.rows())
        throw ShapeError("expand: lane adjacency matrices must be square and equally sized");
    std::vector<BoolAdjacency> powers;
    powers.reserve(plan.depth() + 1);
    powers.push_back(BoolAdjacency::identity(omni.rows()));
    for (ExpansionPlan::Step st : plan.steps) {
        const BoolAdjacency& op = (st == ExpansionPlan::Step::Omni) ? omni : forward;
        powers.push_back(powers.back().multiply(op));
    }
    return powers;
}

// Expanded lane-to-agent connectivity: union over k = 0..K of
// M_L2L^(k) * M_L2A with M_L2A = transpose(M_A2L). Rows are source lanes,
// columns are target agents.
inline BoolAdjacency expand_l2a(const BoolAdjacency& a2l, const BoolAdjacency& omni,
                                const BoolAdjacency& forward, const ExpansionPlan& plan) {
    const BoolAdjacency l2a = a2l.transpose();
    BoolAdjacency acc = l2a;
    for (const BoolAdjacency& power : expand(plan, omni, forward)) {
        acc = acc.unite(power.multiply(l2a));
    }
    return acc;
}

// Lane-guided agent-to-agent connectivity: union over k = 0..K of
// M_A2L * M_L2L^(k) * M_L2A, diagonal removed.
inline BoolAdjacency expand_a2a(const BoolAdjacency& a2l, const BoolAdjacency& omni,
                                const BoolAdjacency& forward, const ExpansionPlan& plan) {
    const BoolAdjacency l2a = a2l.transpose();
    BoolAdjacency acc(a2l.rows(), a2l.rows());
    for (const BoolAdjacency& power : expand(plan, omni, forward)) {
        acc = acc.unite(a2l.multiply(power.multiply(l2a)));
    }
    return acc.without_diagonal();
}

// All typed edge sets of one scene graph.
struct EdgeSets {
    BoolAdjacency a2l;       // agents x lanes, raw spatial alignment
    BoolAdjacency l2l_o;     // lanes x lanes, omnidirectional connectivity
    BoolAdjacency l2l_f;     // lanes x lanes, forward-driving connectivity
    BoolAdjacency l2a;       // lanes x agents, after topology expansion
    BoolAdjacency a2a;       // agents x agents, after topology expansion
};

inline EdgeSets build_edge_sets(const Scene& scene, double radius, const ExpansionPlan& plan) {
    EdgeSets es;
    const LaneGraph lg = build_l2l(scene);
    es.l2l_o = lg.omni;
    es.l2l_f = lg.forward;
    es.a2l = build_a2l(scene, radius);
    es.l2a = expand_l2a(es.a2l, lg.omni, lg.forward, plan);
    es.a2a = expand_a2a(es.a2l, lg.omni, lg.forward, plan);
    return es;
}

struct EdgeCensus {
    std::size_t a2l = 0;
    std::size_t l2l = 0;  // omnidirectional connectivity count; invariant in r
    std::size_t l2a = 0;
    std::size_t a2a = 0;
};

inline EdgeCensus edge_census(const Scene& scene, double radius, const ExpansionPlan& plan) {
    const EdgeSets es = build_edge_sets(scene, radius, plan);
    EdgeCensus c;
    c.a2l = es.a2l.edge_count();
    c.l2l = es.l2l_o.edge_count();
    c.l2a = es.l2a.edge_count();
    c.a2a = es.a2a.edge_count();
    return c;
}

}  // namespace sparscene
