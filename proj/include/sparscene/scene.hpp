#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sparscene/error.hpp"
#include "sparscene/geometry.hpp"

namespace sparscene {

// 11 observed frames per agent (1 s of history at 10 Hz, inclusive of t = 0),
// giving 10 frame-to-frame displacement entries.
constexpr int kHistoryFrames = 11;
constexpr int kAgentDeltaSteps = kHistoryFrames - 1;
// Lane polylines are resampled to 12 points, giving 11 segment deltas.
constexpr int kLanePoints = 12;
constexpr int kLaneDeltaSteps = kLanePoints - 1;
// Prediction horizon: 80 future steps at 10 Hz.
constexpr int kFutureSteps = 80;
constexpr int kNumModes = 6;

enum class AgentKind : int { Vehicle = 0, Pedestrian = 1, Cyclist = 2 };
constexpr int kNumAgentKinds = 3;

enum class LaneKind : int { SurfaceStreet = 0, Freeway = 1, BikeLane = 2, Other = 3 };
constexpr int kNumLaneKinds = 4;

enum class SignalState : int { None = 0, Green = 1, Yellow = 2, Red = 3 };
constexpr int kNumSignalStates = 4;

struct AgentState {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double heading = 0.0;  // radians, (-pi, pi]
};

struct AgentTrack {
    int64_t id = 0;
    AgentKind kind = AgentKind::Vehicle;
    std::vector<AgentState> states;  // kHistoryFrames entries, t = -10..0
    std::vector<bool> valid;         // per-step observation mask
    double length = 4.5;
    double width = 2.0;
    double height = 1.6;

    const AgentState& current() const { return states.back(); }
    Pose anchor() const { return Pose(current().x, current().y, current().heading); }
};

struct LanePolyline {
    int64_t id = 0;
    LaneKind kind = LaneKind::SurfaceStreet;
    SignalState signal = SignalState::None;
    std::vector<Vec2> waypoints;
    std::vector<int64_t> successors;
    std::vector<int64_t> predecessors;
    std::vector<int64_t> left_neighbors;
    std::vector<int64_t> right_neighbors;
};

struct Scene {
    std::string scene_id;
    std::vector<AgentTrack> agents;
    std::vector<LanePolyline> lanes;

    int num_agents() const { return static_cast<int>(agents.size()); }
    int num_lanes() const { return static_cast<int>(lanes.size()); }

    // Dense index of a lane id, or -1.
    std::unordered_map<int64_t, int> lane_index() const {
        std::unordered_map<int64_t, int> m;
        m.reserve(lanes.size());
        for (size_t i = 0; i < lanes.size(); ++i) m.emplace(lanes[i].id, static_cast<int>(i));
        return m;
    }
};

inline void validate_scene(const Scene& scene) {
    if (scene.agents.empty()) throw DataError("scene " + scene.scene_id + ": no agents");
    if (scene.lanes.empty()) throw DataError("scene " + scene.scene_id + ": no lanes");
    std::unordered_set<int64_t> ids;
    for (const auto& a : scene.agents) {
        if (!ids.insert(a.id).second)
            throw DataError("scene " + scene.scene_id + ": duplicate agent id " +
                            std::to_string(a.id));
        if (static_cast<int>(a.states.size()) != kHistoryFrames ||
            a.valid.size() != a.states.size())
            throw DataError("agent " + std::to_string(a.id) + ": expected " +
                            std::to_string(kHistoryFrames) + " states, got " +
                            std::to_string(a.states.size()));
        if (!a.valid.back())
            throw DataError("agent " + std::to_string(a.id) + ": t=0 state must be valid");
    }
    ids.clear();
    for (const auto& l : scene.lanes) {
        if (!ids.insert(l.id).second)
            throw DataError("scene " + scene.scene_id + ": duplicate lane id " +
                            std::to_string(l.id));
        if (l.waypoints.size() < 2)
            throw DataError("lane " + std::to_string(l.id) + ": fewer than 2 waypoints");
        for (size_t i = 0; i + 1 < l.waypoints.size(); ++i) {
            if ((l.waypoints[i + 1] - l.waypoints[i]).norm() <= 1e-9)
                throw DataError("lane " + std::to_string(l.id) +
                                ": coincident consecutive waypoints");
        }
    }
    for (const auto& l : scene.lanes) {
        auto check = [&](const std::vector<int64_t>& refs, const char* what) {
            for (int64_t r : refs) {
                if (r == l.id)
                    throw DataError("lane " + std::to_string(l.id) + ": self-referencing " + what);
                if (!ids.count(r))
                    throw DataError("lane " + std::to_string(l.id) + ": dangling " + what +
                                    " id " + std::to_string(r));
            }
        };
        check(l.successors, "successor");
        check(l.predecessors, "predecessor");
        check(l.left_neighbors, "left neighbor");
        check(l.right_neighbors, "right neighbor");
    }
}

// ---------------------------------------------------------------------------
// Polyline resampling
// ---------------------------------------------------------------------------

// Resample a polyline to n points at equal arc-length spacing.
// Endpoints are preserved exactly.
inline std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int n = kLanePoints) {
    if (pts.size() < 2 || n < 2)
        throw DataError("resample_polyline: need >= 2 input points and n >= 2");
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) {
        cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    const double total = cum.back();
    if (total <= 0.0) throw DataError("resample_polyline: degenerate polyline (zero length)");
    std::vector<Vec2> out(n);
    out.front() = pts.front();
    out.back() = pts.back();
    size_t seg = 0;
    for (int k = 1; k + 1 < n; ++k) {
        const double s = total * static_cast<double>(k) / static_cast<double>(n - 1);
        while (seg + 2 < pts.size() && cum[seg + 1] < s) ++seg;
        const double seg_len = cum[seg + 1] - cum[seg];
        const double t = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
        out[k] = pts[seg] + (pts[seg + 1] - pts[seg]) * t;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Displacement features
// ---------------------------------------------------------------------------

// One per-step motion entry in the agent's anchor frame.
struct Displacement {
    double dx = 0.0;
    double dy = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    double dtheta = 0.0;
    bool valid = false;
};

// Convert a state sequence into kAgentDeltaSteps displacement entries,
// expressed in the local frame anchored at the t = 0 pose. Entry t covers
// the step t-1 -> t; it is valid only when both endpoints were observed.
inline std::vector<Displacement> to_displacements(const AgentTrack& track) {
    const Pose anchor = track.anchor();
    std::vector<Displacement> out(track.states.size() - 1);
    for (size_t t = 1; t < track.states.size(); ++t) {
        Displacement& d = out[t - 1];
        if (!track.valid[t] || !track.valid[t - 1]) continue;
        const AgentState& prev = track.states[t - 1];
        const AgentState& cur = track.states[t];
        const Vec2 dp = rotate(Vec2(cur.x - prev.x, cur.y - prev.y), -anchor.theta);
        const Vec2 v = rotate(Vec2(cur.vx, cur.vy), -anchor.theta);
        d.dx = dp.x;
        d.dy = dp.y;
        d.vx = v.x;
        d.vy = v.y;
        d.dtheta = wrap_angle(cur.heading - prev.heading);
        d.valid = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

struct LocalizedAgent {
    Pose anchor;
    std::vector<Displacement> motion;  // kAgentDeltaSteps entries
};

struct LocalizedLane {
    Pose anchor;                   // middle resampled waypoint + bracketing heading
    std::vector<Vec2> waypoints;   // kLanePoints points in the anchor frame
};

// A Scene with every node's features expressed in its own local frame,
// plus the anchor poses needed for relative edge geometry.
struct LocalizedScene {
    const Scene* scene = nullptr;
    std::vector<LocalizedAgent> agents;
    std::vector<LocalizedLane> lanes;
};

// Lane anchor: the middle resampled waypoint, heading taken from the chord
// bracketing it.
inline Pose lane_anchor(const std::vector<Vec2>& resampled) {
    const int n = static_cast<int>(resampled.size());
    const int m = n / 2;
    const Vec2 a = resampled[std::max(m - 1, 0)];
    const Vec2 b = resampled[std::min(m + 1, n - 1)];
    const Vec2 chord = b - a;
    const double heading = (chord.norm() > 0.0) ? std::atan2(chord.y, chord.x) : 0.0;
    return Pose(resampled[m], heading);
}

inline LocalizedScene localize(const Scene& scene) {
    validate_scene(scene);
    LocalizedScene out;
    out.scene = &scene;
    out.agents.reserve(scene.agents.size());
    for (const auto& a : scene.agents) {
        LocalizedAgent la;
        la.anchor = a.anchor();
        la.motion = to_displacements(a);
        out.agents.push_back(std::move(la));
    }
    out.lanes.reserve(scene.lanes.size());
    for (const auto& l : scene.lanes) {
        const std::vector<Vec2> rs = resample_polyline(l.waypoints, kLanePoints);
        LocalizedLane ll;
        ll.anchor = lane_anchor(rs);
        ll.waypoints.reserve(rs.size());
        for (const Vec2& w : rs) ll.waypoints.push_back(ll.anchor.to_local(w));
        out.lanes.push_back(std::move(ll));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Block-diagonal batching
// ---------------------------------------------------------------------------

struct BatchOffsets {
    // (agent_start, lane_start) per source scene, in input order.
    std::vector<std::pair<int, int>> starts;
    std::vector<int> agent_counts;
    std::vector<int> lane_counts;
};

// Merge several scenes into one by concatenating node lists. Node ids are
// re-assigned to dense offsets so lane connectivity stays scene-local; the
// returned offsets allow outputs to be split back per scene.
inline std::pair<Scene, BatchOffsets> batch_scenes(const std::vector<Scene>& scenes) {
    if (scenes.empty()) throw DataError("batch_scenes: no scenes");
    Scene merged;
    BatchOffsets off;
    merged.scene_id = "batch";
    for (const Scene& s : scenes) {
        validate_scene(s);
        const int agent_start = merged.num_agents();
        const int lane_start = merged.num_lanes();
        off.starts.emplace_back(agent_start, lane_start);
        off.agent_counts.push_back(s.num_agents());
        off.lane_counts.push_back(s.num_lanes());
        merged.scene_id += ":" + s.scene_id;

        for (int i = 0; i < s.num_agents(); ++i) {
            AgentTrack a = s.agents[i];
            a.id = agent_start + i;
            merged.agents.push_back(std::move(a));
        }
        std::unordered_map<int64_t, int64_t> remap;
        remap.reserve(s.lanes.size());
        for (int j = 0; j < s.num_lanes(); ++j) {
            remap.emplace(s.lanes[j].id, lane_start + j);
        }
        for (int j = 0; j < s.num_lanes(); ++j) {
            LanePolyline l = s.lanes[j];
            l.id = lane_start + j;
            auto apply = [&](std::vector<int64_t>& ids) {
                for (auto& v : ids) v = remap.at(v);
            };
            apply(l.successors);
            apply(l.predecessors);
            apply(l.left_neighbors);
            apply(l.right_neighbors);
            merged.lanes.push_back(std::move(l));
        }
    }
    return {std::move(merged), std::move(off)};
}

// Apply a global rigid transform (rotation then translation) to a scene.
inline Scene transform_scene(const Scene& scene, double rot, const Vec2& trans) {
    Scene out = scene;
    for (auto& a : out.agents) {
        for (auto& s : a.states) {
            const Vec2 p = rotate(Vec2(s.x, s.y), rot) + trans;
            const Vec2 v = rotate(Vec2(s.vx, s.vy), rot);
            s.x = p.x;
            s.y = p.y;
            s.vx = v.x;
            s.vy = v.y;
            s.heading = wrap_angle(s.heading + rot);
        }
    }
    for (auto& l : out.lanes) {
        for (auto& w : l.waypoints) w = rotate(w, rot) + trans;
    }
    return out;
}

}  // namespace sparscene
