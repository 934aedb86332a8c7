#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sparscene/error.hpp"
#include "sparscene/params.hpp"
#include "sparscene/scene.hpp"
#include "sparscene/training.hpp"

namespace sparscene {

struct SynthConfig {
    enum class Network { Straight, TJunction, FourWay };
    Network network = Network::Straight;
    int lanes_per_approach = 2;
    int min_agents = 2;
    int max_agents = 6;
    double min_speed = 3.0;   // m/s, vehicles
    double max_speed = 12.0;  // m/s, vehicles
    double lane_change_prob = 0.15;
    double cyclist_prob = 0.1;
    double pedestrian_prob = 0.1;
    int horizon = kFutureSteps;
    double dt = 0.1;

    void validate() const {
        if (lanes_per_approach < 1 || lanes_per_approach > 4)
            throw ConfigError("synth config: lanes_per_approach in [1, 4]");
        if (min_agents < 1 || max_agents < min_agents)
            throw ConfigError("synth config: agent range invalid");
        if (min_speed <= 0.0 || max_speed < min_speed)
            throw ConfigError("synth config: speed range invalid");
        if (max_speed * dt > 20.0)
            throw ConfigError("synth config: speed * dt exceeds lane segment scale");
        if (lane_change_prob < 0.0 || lane_change_prob > 1.0)
            throw ConfigError("synth config: lane_change_prob in [0, 1]");
        if (horizon < 1 || dt <= 0.0) throw ConfigError("synth config: horizon/dt invalid");
    }

    static Network parse_network(const std::string& name) {
        if (name == "straight") return Network::Straight;
        if (name == "t" || name == "t-junction") return Network::TJunction;
        if (name == "fourway" || name == "four-way") return Network::FourWay;
        throw ConfigError("unknown network kind: " + name);
    }
};

namespace synth_detail {

constexpr double kLaneWidth = 3.5;

// A drivable route: lane indices in driving order; geometry is the
// concatenation of those lanes' waypoints.
struct Corridor {
    std::vector<int> lane_seq;
    std::vector<Vec2> points;
    std::vector<double> cum;
    bool allow_lane_change = false;
    int paired_corridor = -1;  // lateral neighbor route, when one exists

    double length() const { return cum.back(); }

    Vec2 point_at(double s) const {
        if (s <= 0.0) return points.front();
        if (s >= cum.back()) {
            // extrapolate along the final segment
            const Vec2 dir = tangent_at(cum.back());
            return points.back() + dir * (s - cum.back());
        }
        const auto it = std::upper_bound(cum.begin(), cum.end(), s);
        const size_t i = static_cast<size_t>(it - cum.begin()) - 1;
        const double seg = cum[i + 1] - cum[i];
        const double t = seg > 0.0 ? (s - cum[i]) / seg : 0.0;
        return points[i] + (points[i + 1] - points[i]) * t;
    }

    Vec2 tangent_at(double s) const {
        size_t i;
        if (s >= cum.back()) {
            i = points.size() - 2;
        } else {
            const auto it = std::upper_bound(cum.begin(), cum.end(), std::max(s, 0.0));
            i = it == cum.begin() ? 0 : static_cast<size_t>(it - cum.begin()) - 1;
            i = std::min(i, points.size() - 2);
        }
        Vec2 d = points[i + 1] - points[i];
        const double n = d.norm();
        return n > 0.0 ? d * (1.0 / n) : Vec2(1.0, 0.0);
    }

    void finalize() {
        cum.assign(points.size(), 0.0);
        for (size_t i = 1; i < points.size(); ++i)
            cum[i] = cum[i - 1] + (points[i] - points[i - 1]).norm();
    }
};

struct Network {
    std::vector<LanePolyline> lanes;
    std::vector<Corridor> corridors;

    int add_lane(std::vector<Vec2> pts, LaneKind kind = LaneKind::SurfaceStreet,
                 SignalState sig = SignalState::None) {
        LanePolyline l;
        l.id = static_cast<int64_t>(lanes.size());
        l.kind = kind;
        l.signal = sig;
        l.waypoints = std::move(pts);
        lanes.push_back(std::move(l));
        return static_cast<int>(lanes.size()) - 1;
    }

    void link(int from, int to) {
        lanes[from].successors.push_back(to);
        lanes[to].predecessors.push_back(from);
    }

    void lateral(int left, int right) {
        // `left` lies to the left of `right` in driving direction
        lanes[right].left_neighbors.push_back(left);
        lanes[left].right_neighbors.push_back(right);
    }

    int add_corridor(std::vector<int> lane_seq, bool allow_lc) {
        Corridor c;
        c.lane_seq = lane_seq;
        c.allow_lane_change = allow_lc;
        for (size_t k = 0; k < lane_seq.size(); ++k) {
            const auto& wp = lanes[lane_seq[k]].waypoints;
            for (size_t i = (k == 0 ? 0 : 1); i < wp.size(); ++i) c.points.push_back(wp[i]);
        }
        c.finalize();
        corridors.push_back(std::move(c));
        return static_cast<int>(corridors.size()) - 1;
    }
};

inline std::vector<Vec2> line_points(Vec2 a, Vec2 b, int n) {
    std::vector<Vec2> pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        pts.push_back(a + (b - a) * t);
    }
    return pts;
}

// Quadratic Bezier sampled densely enough for smooth turning geometry.
inline std::vector<Vec2> bezier_points(Vec2 a, Vec2 c, Vec2 b, int n = 14) {
    std::vector<Vec2> pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        const double u = 1.0 - t;
        pts.push_back(a * (u * u) + c * (2.0 * u * t) + b * (t * t));
    }
    return pts;
}

// Straight multi-lane road along +x: 3 chained segments per lane.
inline Network build_straight(int lanes) {
    Network net;
    std::vector<std::vector<int>> chain(lanes);
    for (int k = 0; k < lanes; ++k) {
        const double y = k * kLaneWidth;
        for (int seg = 0; seg < 3; ++seg) {
            const double x0 = -40.0 + seg * 100.0;
            chain[k].push_back(net.add_lane(line_points({x0, y}, {x0 + 100.0, y}, 6)));
        }
        for (int seg = 0; seg + 1 < 3; ++seg) net.link(chain[k][seg], chain[k][seg + 1]);
    }
    for (int k = 0; k + 1 < lanes; ++k) {
        for (int seg = 0; seg < 3; ++seg) net.lateral(chain[k + 1][seg], chain[k][seg]);
    }
    for (int k = 0; k < lanes; ++k) {
        const int c = net.add_corridor(chain[k], lanes > 1);
        if (k > 0) {
            net.corridors[c].paired_corridor = c - 1;
            net.corridors[c - 1].paired_corridor = c;
        }
    }
    return net;
}

// Shared junction scaffolding: an eastbound road crossing the box
// [-20, 20]^2, with exits east and north; FourWay adds a northbound road.
inline Network build_junction(int lanes, bool four_way) {
    Network net;
    std::vector<std::vector<int>> west(lanes), east(lanes), north(lanes), south(lanes);
    for (int k = 0; k < lanes; ++k) {
        const double y = k * kLaneWidth;
        const double x = k * kLaneWidth - 10.0;  // northbound road through the box
        west[k] = {net.add_lane(line_points({-180.0, y}, {-100.0, y}, 5)),
                   net.add_lane(line_points({-100.0, y}, {-20.0, y}, 5), LaneKind::SurfaceStreet,
                                SignalState::Green)};
        east[k] = {net.add_lane(line_points({20.0, y}, {100.0, y}, 5)),
                   net.add_lane(line_points({100.0, y}, {180.0, y}, 5))};
        north[k] = {net.add_lane(line_points({x, 20.0}, {x, 100.0}, 5)),
                    net.add_lane(line_points({x, 100.0}, {x, 180.0}, 5))};
        net.link(west[k][0], west[k][1]);
        net.link(east[k][0], east[k][1]);
        net.link(north[k][0], north[k][1]);
        if (four_way) {
            south[k] = {net.add_lane(line_points({x, -180.0}, {x, -100.0}, 5)),
                        net.add_lane(line_points({x, -100.0}, {x, -20.0}, 5),
                                     LaneKind::SurfaceStreet, SignalState::Green)};
            net.link(south[k][0], south[k][1]);
        }
    }
    for (int k = 0; k + 1 < lanes; ++k) {
        for (int seg = 0; seg < 2; ++seg) {
            net.lateral(west[k + 1][seg], west[k][seg]);
            net.lateral(east[k + 1][seg], east[k][seg]);
            net.lateral(north[k][seg], north[k + 1][seg]);
            if (four_way) net.lateral(south[k][seg], south[k + 1][seg]);
        }
    }
    for (int k = 0; k < lanes; ++k) {
        const double y = k * kLaneWidth;
        const double x = k * kLaneWidth + 30.0;
        // straight through, and left turn to the north exit
        const int through = net.add_lane(line_points({-20.0, y}, {20.0, y}, 5));
        const int left = net.add_lane(bezier_points({-20.0, y}, {x, y}, {x, 20.0}));
        net.link(west[k][1], through);
        net.link(through, east[k][0]);
        net.link(west[k][1], left);
        net.link(left, north[k][0]);
        const int c_thru =
            net.add_corridor({west[k][0], west[k][1], through, east[k][0], east[k][1]}, lanes > 1);
        net.add_corridor({west[k][0], west[k][1], left, north[k][0], north[k][1]}, false);
        if (k > 0) {
            // pair the through corridors of adjacent lanes for lane changes
            int prev = -1;
            for (int ci = 0; ci < c_thru; ++ci) {
                if (net.corridors[ci].allow_lane_change &&
                    net.corridors[ci].lane_seq[0] == west[k - 1][0])
                    prev = ci;
            }
            if (prev >= 0) {
                net.corridors[c_thru].paired_corridor = prev;
                net.corridors[prev].paired_corridor = c_thru;
            }
        }
        if (four_way) {
            const int up = net.add_lane(line_points({x, -20.0}, {x, 20.0}, 5));
            net.link(south[k][1], up);
            net.link(up, north[k][0]);
            net.add_corridor({south[k][0], south[k][1], up, north[k][0], north[k][1]}, false);
            // right turn from the northbound road onto the east exit
            const int right = net.add_lane(bezier_points({x, -20.0}, {x, y}, {20.0, y}));
            net.link(south[k][1], right);
            net.link(right, east[k][0]);
            net.add_corridor({south[k][0], south[k][1], right, east[k][0], east[k][1]}, false);
        }
    }
    return net;
}

}  // namespace synth_detail

// Deterministic synthetic scenario: agents follow lane centerlines at
// constant speed, with optional lane changes and junction turns. History is
// the first 11 frames, the future the next `horizon` frames.
inline ScenarioSample gen_scene(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    using namespace synth_detail;
    Rng rng(seed);
    Network net;
    switch (cfg.network) {
        case SynthConfig::Network::Straight:
            net = build_straight(cfg.lanes_per_approach);
            break;
        case SynthConfig::Network::TJunction:
            net = build_junction(cfg.lanes_per_approach, false);
            break;
        case SynthConfig::Network::FourWay:
            net = build_junction(cfg.lanes_per_approach, true);
            break;
    }

    ScenarioSample sample;
    sample.scene.scene_id = "synth-" + std::to_string(seed);
    sample.scene.lanes = net.lanes;

    const int n_agents = rng.range(cfg.min_agents, cfg.max_agents);
    const double t_hist = kAgentDeltaSteps * cfg.dt;
    const double t_total = (kAgentDeltaSteps + cfg.horizon) * cfg.dt;

    // (corridor, s0, speed) of placed agents, for headway checks
    struct Placed {
        int corridor;
        double s0;
        double speed;
    };
    std::vector<Placed> placed;

    for (int i = 0; i < n_agents; ++i) {
        AgentKind kind = AgentKind::Vehicle;
        const double kr = rng.uniform();
        if (kr < cfg.pedestrian_prob) {
            kind = AgentKind::Pedestrian;
        } else if (kr < cfg.pedestrian_prob + cfg.cyclist_prob) {
            kind = AgentKind::Cyclist;
        }
        double speed;
        switch (kind) {
            case AgentKind::Pedestrian:
                speed = rng.uniform(0.8, 1.8);
                break;
            case AgentKind::Cyclist:
                speed = rng.uniform(2.0, 6.0);
                break;
            default:
                speed = rng.uniform(cfg.min_speed, cfg.max_speed);
        }

        int corridor = -1;
        double s0 = 0.0;
        bool ok = false;
        for (int attempt = 0; attempt < 24 && !ok; ++attempt) {
            corridor = static_cast<int>(rng.below(net.corridors.size()));
            const Corridor& c = net.corridors[static_cast<size_t>(corridor)];
            const double lo = std::min(5.0 + speed * t_hist, c.length() * 0.5);
            const double hi = std::max(lo + 1.0, c.length() - 5.0 - speed * cfg.horizon * cfg.dt);
            s0 = rng.uniform(lo, hi);
            ok = true;
            for (const Placed& p : placed) {
                if (p.corridor != corridor) continue;
                // closest approach of two constant-speed points within the
                // simulated window
                const double gap0 = s0 - p.s0;
                const double dv = speed - p.speed;
                double min_gap = std::min(std::fabs(gap0 - dv * t_hist),
                                          std::fabs(gap0 + dv * (t_total - t_hist)));
                min_gap = std::min(min_gap, std::fabs(gap0));
                if (min_gap < 8.0) {
                    ok = false;
                    break;
                }
            }
        }
        if (!ok) continue;  // dense scene; skip this agent
        placed.push_back({corridor, s0, speed});

        const Corridor& c = net.corridors[static_cast<size_t>(corridor)];
        const bool lane_change = kind == AgentKind::Vehicle && c.allow_lane_change &&
                                 c.paired_corridor >= 0 && rng.chance(cfg.lane_change_prob);
        const Corridor* target =
            lane_change ? &net.corridors[static_cast<size_t>(c.paired_corridor)] : nullptr;

        // sample positions on a uniform clock from t = -1.0 s to the horizon
        const int total_frames = kHistoryFrames + cfg.horizon;
        std::vector<Vec2> pos(total_frames);
        for (int f = 0; f < total_frames; ++f) {
            const double t = (f - kAgentDeltaSteps) * cfg.dt;
            const double s = s0 + speed * t;
            Vec2 p = c.point_at(s);
            if (target != nullptr && t > 1.0) {
                // blend laterally toward the paired corridor over two seconds
                const double u = std::min(1.0, (t - 1.0) / 2.0);
                const double w = u * u * (3.0 - 2.0 * u);
                const Vec2 q = target->point_at(s);
                p = p + (q - p) * w;
            }
            pos[f] = p;
        }

        AgentTrack track;
        track.id = i;
        track.kind = kind;
        switch (kind) {
            case AgentKind::Pedestrian:
                track.length = 0.8;
                track.width = 0.8;
                track.height = 1.8;
                break;
            case AgentKind::Cyclist:
                track.length = 1.9;
                track.width = 0.7;
                track.height = 1.7;
                break;
            default:
                track.length = 4.5 + rng.uniform(-0.5, 0.5);
                track.width = 2.0;
                track.height = 1.6;
        }
        track.states.resize(kHistoryFrames);
        track.valid.resize(kHistoryFrames);
        for (int f = 0; f < kHistoryFrames; ++f) {
            const double t = (f - kAgentDeltaSteps) * cfg.dt;
            const double s = s0 + speed * t;
            AgentState st;
            st.x = pos[f].x;
            st.y = pos[f].y;
            st.z = 0.0;
            const Vec2 dir = f + 1 < total_frames ? (pos[f + 1] - pos[f]) * (1.0 / cfg.dt)
                                                  : (pos[f] - pos[f - 1]) * (1.0 / cfg.dt);
            st.vx = dir.x;
            st.vy = dir.y;
            st.heading = wrap_angle(std::atan2(dir.y, dir.x));
            track.states[f] = st;
            // agents that entered the corridor mid-history have masked steps
            track.valid[f] = s >= 0.0 || f == kAgentDeltaSteps;
        }
        sample.scene.agents.push_back(std::move(track));

        for (int t = 0; t < cfg.horizon; ++t) {
            const Vec2& p = pos[kHistoryFrames + t];
            sample.futures.push_back(p.x);
            sample.futures.push_back(p.y);
            sample.future_valid.push_back(1);
        }
    }

    if (sample.scene.agents.empty()) {
        // guarantee N_a >= 1: place a single slow agent on corridor 0
        const Corridor& c = net.corridors[0];
        AgentTrack track;
        track.id = 0;
        track.kind = AgentKind::Vehicle;
        const double speed = cfg.min_speed;
        const double s0 = std::min(20.0, c.length() * 0.25);
        track.states.resize(kHistoryFrames);
        track.valid.assign(kHistoryFrames, true);
        for (int f = 0; f < kHistoryFrames; ++f) {
            const double s = s0 + speed * (f - kAgentDeltaSteps) * cfg.dt;
            const Vec2 p = c.point_at(std::max(0.0, s));
            const Vec2 d = c.tangent_at(std::max(0.0, s));
            track.states[f] = {p.x, p.y, 0.0, speed * d.x, speed * d.y,
                               wrap_angle(std::atan2(d.y, d.x))};
        }
        sample.scene.agents.push_back(std::move(track));
        for (int t = 0; t < cfg.horizon; ++t) {
            const Vec2 p = c.point_at(s0 + speed * (t + 1) * cfg.dt);
            sample.futures.push_back(p.x);
            sample.futures.push_back(p.y);
            sample.future_valid.push_back(1);
        }
    }

    // ids were assigned before skips; compact them
    for (size_t i = 0; i < sample.scene.agents.size(); ++i)
        sample.scene.agents[i].id = static_cast<int64_t>(i);

    validate_scene(sample.scene);
    return sample;
}

}  // namespace sparscene
