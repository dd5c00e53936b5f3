#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vxs/math.hpp"
#include "vxs/perception.hpp"
#include "vxs/terrain.hpp"
#include "vxs/voxel.hpp"

namespace vxs {

// ======================================================
// Episode constants and configs
// ======================================================
inline constexpr int kJointCount = 29;
inline constexpr int kActionHistoryLen = 4;
inline constexpr int kProprioHistoryLen = 6;
inline constexpr double kControlDt = 0.02;  // 50 Hz control ticks

struct RewardConfig {
    double horizon = 10.0;         // episode length T
    double reach_window = 2.0;     // terminal window T_r
    double kappa = 0.8;            // tangential circulation gain
    double influence_radius = 1.0; // obstacle neighborhood
    double standoff = 0.2;         // weight distance offset
    double weight_floor = 0.02;    // clamped minimum of the shifted distance
    double falloff = 0.8;          // weight reaches zero here
    double head_lookahead = 0.45;
    double patch_size = 0.5;       // square probe patch edge
    double head_offset = 0.1;
    double foot_lookahead = 0.5;
    double sharpness = 4.0;        // height tracking exponent scale
    int patch_samples = 5;         // per axis
    double tangent_sign = 1.0;     // +1 circulates counterclockwise
};

struct TerminationConfig {
    double force_limit = 100.0;        // N, on torso/hip/knee bodies
    double sink_depth = 0.10;          // feet below the stepping datum
    double move_radius = 1.0;          // minimum displacement ...
    double move_window = 4.0;          // ... over this window
    double tilt_limit_deg = 60.0;      // base tilt from vertical
    double feet_min_separation = 0.10;
    double horizon = 10.0;
    double success_radius = 0.5;       // goal distance counted as reached
};

// ======================================================
// Episode state
// ======================================================
struct ProprioFrame {
    Vec3 angular_velocity{0, 0, 0};
    Vec3 gravity{0, 0, -1};
    std::array<double, kJointCount> q{};
    std::array<double, kJointCount> qd{};
};

// Monitored contact bodies, in the order forces are reported.
enum class ContactBody { kTorso = 0, kHipLeft, kHipRight, kKneeLeft, kKneeRight };
inline constexpr int kContactBodyCount = 5;

struct EpisodeState {
    Vec3 goal_relative{0, 0, 0};  // base-frame vector to the goal
    double elapsed = 0.0;
    double horizon = 10.0;
    RigidTransform base_pose = RigidTransform::identity();
    Vec3 linear_velocity{0, 0, 0};   // world frame
    Vec3 angular_velocity{0, 0, 0};  // base frame
    Vec3 gravity{0, 0, -1};          // unit, base frame
    std::array<double, kJointCount> q{};
    std::array<double, kJointCount> qd{};
    std::array<Vec3, 2> feet{};      // world positions, left then right
    std::array<double, kContactBodyCount> contact_forces{};

    // oldest first; the last proprio frame mirrors the current fields
    std::array<std::array<double, kJointCount>, kActionHistoryLen> action_history{};
    std::array<ProprioFrame, kProprioHistoryLen> proprio_history{};

    double time_left() const { return horizon - elapsed; }

    void push_action(const std::array<double, kJointCount>& a) {
        for (int i = 0; i + 1 < kActionHistoryLen; ++i) action_history[i] = action_history[i + 1];
        action_history[kActionHistoryLen - 1] = a;
    }
    void push_proprio() {
        for (int i = 0; i + 1 < kProprioHistoryLen; ++i)
            proprio_history[i] = proprio_history[i + 1];
        proprio_history[kProprioHistoryLen - 1] = {angular_velocity, gravity, q, qd};
    }
};

// ======================================================
// Reward kernels
// ======================================================

// goal-reaching reward, nonzero only in the final window
inline double r_reach(double goal_distance, double t, const RewardConfig& cfg = {}) {
    if (t <= cfg.horizon - cfg.reach_window) return 0.0;
    return 1.0 / (1.0 + goal_distance * goal_distance) / cfg.reach_window;
}

inline double r_reach(const Vec3& goal_relative, double t, const RewardConfig& cfg = {}) {
    return r_reach(goal_relative.norm(), t, cfg);
}

// distance weighting for obstacle influence; zero beyond standoff + falloff
inline double weight_w(double distance, const RewardConfig& cfg = {}) {
    const double m = std::max(distance - cfg.standoff, cfg.weight_floor);
    const double fall = std::max(1.0 - m / cfg.falloff, 0.0);
    return fall * fall / m;
}

// ======================================================
// Obstacle sampling and the direction field
// ======================================================
struct ObstaclePoint {
    Vec3 position;  // horizontal sample, z = 0
    Vec3 tangent;   // horizontal unit circulation direction
};

struct ObstacleSet {
    std::vector<ObstaclePoint> points;
};

namespace detail {

inline Vec3 horizontal_unit(const Vec3& v, const Vec3& fallback = {1, 0, 0}) {
    const double n = std::hypot(v.x, v.y);
    if (n < 1e-9) return fallback;
    return {v.x / n, v.y / n, 0.0};
}

// counterclockwise quarter turn: up x u
inline Vec3 rot90(const Vec3& u) { return {-u.y, u.x, 0.0}; }

inline void add_obstacle_point(ObstacleSet& set, const Vec3& sample, const Vec3& robot,
                               double tangent_sign) {
    for (const ObstaclePoint& p : set.points)
        if (std::hypot(p.position.x - sample.x, p.position.y - sample.y) < 1e-9) return;
    const Vec3 away = horizontal_unit({robot.x - sample.x, robot.y - sample.y, 0.0});
    set.points.push_back({sample, rot90(away) * tangent_sign});
}

}  // namespace detail

// Samples the avoidance-relevant geometry of a block as seen from the robot:
// tree trunks contribute their nearest surface point, wall segments their
// nearest point plus both ends.
inline ObstacleSet make_obstacle_set(const TerrainBlock& block, const Vec3& robot,
                                     const RewardConfig& cfg = {}) {
    ObstacleSet set;
    if (block.family == TerrainFamily::kForest) {
        for (size_t i = 1; i < block.meshes.size(); ++i) {
            const Aabb b = block.meshes[i].bounds();
            const Vec3 center{(b.min.x + b.max.x) / 2, (b.min.y + b.max.y) / 2, 0.0};
            const double radius = (b.max.x - b.min.x) / 2;
            const Vec3 out = detail::horizontal_unit(
                {robot.x - center.x, robot.y - center.y, 0.0});
            detail::add_obstacle_point(set, center + out * radius, robot, cfg.tangent_sign);
        }
    } else if (block.family == TerrainFamily::kDoor) {
        for (size_t i = 1; i < block.meshes.size(); ++i) {
            const Aabb b = block.meshes[i].bounds();
            const double cx = (b.min.x + b.max.x) / 2;
            const Vec3 nearest{cx, std::clamp(robot.y, b.min.y, b.max.y), 0.0};
            detail::add_obstacle_point(set, nearest, robot, cfg.tangent_sign);
            detail::add_obstacle_point(set, {cx, b.min.y, 0.0}, robot, cfg.tangent_sign);
            detail::add_obstacle_point(set, {cx, b.max.y, 0.0}, robot, cfg.tangent_sign);
        }
    }
    return set;
}

// a(p, g) = sum w_j u_rj + kappa * sum w_j gamma_j t_j over neighbors within
// the influence radius; gamma gates circulation to obstacles toward the goal.
inline Vec3 direction_field(const Vec3& p, const Vec3& goal_dir, const ObstacleSet& obstacles,
                            const RewardConfig& cfg = {}) {
    Vec3 a{0, 0, 0};
    const Vec3 g = detail::horizontal_unit(goal_dir);
    for (const ObstaclePoint& ob : obstacles.points) {
        const double d = std::hypot(p.x - ob.position.x, p.y - ob.position.y);
        if (d >= cfg.influence_radius || d < 1e-12) continue;
        const Vec3 u_r{(p.x - ob.position.x) / d, (p.y - ob.position.y) / d, 0.0};
        const double w = weight_w(d, cfg);
        const double gamma = std::max(g.dot(u_r * -1.0), 0.0);
        a = a + u_r * w + ob.tangent * (cfg.kappa * w * gamma);
    }
    return a;
}

// cosine alignment; zero when either vector is degenerate
inline double r_velocity_direction(const Vec3& v, const Vec3& a) {
    const double nv = v.norm(), na = a.norm();
    if (nv < 1e-8 || na < 1e-8) return 0.0;
    return a.dot(v) / (na * nv);
}

// ======================================================
// Lookahead height probes and height tracking rewards
// ======================================================

// Average terrain height over a square patch ahead of the base along the
// horizontal goal direction, minus a fixed offset. Probes that leave the
// terrain are skipped; an all-miss patch falls back to ground level zero.
inline double lookahead_height(const TerrainBlock& block, const RigidTransform& base_pose,
                               const Vec3& goal_dir, double lookahead, double patch,
                               double offset, int samples = 5) {
    if (samples < 1) throw std::invalid_argument("patch needs at least one sample per axis");
    const Vec3 fwd = detail::horizontal_unit(goal_dir, detail::horizontal_unit(
                                                           base_pose.rotate({1, 0, 0})));
    const Vec3 center = base_pose.translation + fwd * lookahead;
    const double pitch = samples > 1 ? patch / (samples - 1) : 0.0;
    double sum = 0.0;
    int hits = 0;
    for (int iy = 0; iy < samples; ++iy)
        for (int ix = 0; ix < samples; ++ix) {
            const double x = center.x - patch / 2 + ix * pitch;
            const double y = center.y - patch / 2 + iy * pitch;
            if (const auto z = block.ground_height(x, y)) {
                sum += *z;
                ++hits;
            }
        }
    return (hits > 0 ? sum / hits : 0.0) - offset;
}

inline double height_tracking_reward(double h_est, double h, double sharpness = 4.0) {
    const double e = h_est - h;
    return std::exp(-sharpness * e * e);
}

inline double r_head_height(double h_est, double h_head, const RewardConfig& cfg = {}) {
    return height_tracking_reward(h_est, h_head, cfg.sharpness);
}

inline double r_feet_clearance(double h_est, double h_feet, const RewardConfig& cfg = {}) {
    return height_tracking_reward(h_est, h_feet, cfg.sharpness);
}

// ======================================================
// Termination
// ======================================================
enum class TerminationReason {
    kForceContact,
    kPillarFall,
    kNoMovement,
    kFallOver,
    kFeetTooClose,
    kTimeout,
};

inline const char* termination_name(TerminationReason r) {
    switch (r) {
        case TerminationReason::kForceContact: return "force_contact";
        case TerminationReason::kPillarFall: return "pillar_fall";
        case TerminationReason::kNoMovement: return "no_movement";
        case TerminationReason::kFallOver: return "fall_over";
        case TerminationReason::kFeetTooClose: return "feet_too_close";
        case TerminationReason::kTimeout: return "timeout";
    }
    throw std::invalid_argument("unknown termination reason");
}

struct TerminationEvent {
    TerminationReason reason;
    double time;
    size_t frame;
};

// Incremental monitor; feeding the same frames reproduces check_termination.
class TerminationMonitor {
public:
    explicit TerminationMonitor(const TerminationConfig& cfg = {}, bool pillar_terrain = false,
                                double ground_datum = 0.0)
        : cfg_(cfg), pillar_(pillar_terrain), datum_(ground_datum) {}

    std::optional<TerminationEvent> step(const EpisodeState& s, size_t frame) {
        if (fired_) return fired_;
        for (double f : s.contact_forces)
            if (f > cfg_.force_limit) return fire(TerminationReason::kForceContact, s, frame);
        if (pillar_)
            for (const Vec3& foot : s.feet)
                if (foot.z < datum_ - cfg_.sink_depth)
                    return fire(TerminationReason::kPillarFall, s, frame);

        window_.push_back({s.elapsed, s.base_pose.translation});
        while (window_.size() > 1 && window_.front().first < s.elapsed - cfg_.move_window - 1e-9)
            window_.pop_front();
        if (s.elapsed - window_.front().first >= cfg_.move_window - 1e-9) {
            const Vec3 then = window_.front().second;
            const Vec3 now = s.base_pose.translation;
            if (std::hypot(now.x - then.x, now.y - then.y) < cfg_.move_radius)
                return fire(TerminationReason::kNoMovement, s, frame);
        }

        // tilt: angle of the base up axis against world vertical
        const Vec3 up = s.base_pose.rotate({0, 0, 1});
        if (up.z < std::cos(deg_to_rad(cfg_.tilt_limit_deg)))
            return fire(TerminationReason::kFallOver, s, frame);

        if ((s.feet[0] - s.feet[1]).norm() < cfg_.feet_min_separation)
            return fire(TerminationReason::kFeetTooClose, s, frame);

        if (s.elapsed >= cfg_.horizon - 1e-9) return fire(TerminationReason::kTimeout, s, frame);
        return std::nullopt;
    }

    std::optional<TerminationEvent> result() const { return fired_; }

private:
    std::optional<TerminationEvent> fire(TerminationReason r, const EpisodeState& s,
                                         size_t frame) {
        fired_ = TerminationEvent{r, s.elapsed, frame};
        return fired_;
    }

    TerminationConfig cfg_;
    bool pillar_;
    double datum_;
    std::optional<TerminationEvent> fired_;
    std::deque<std::pair<double, Vec3>> window_;
};

inline std::optional<TerminationEvent> check_termination(const std::vector<EpisodeState>& trace,
                                                         const TerrainBlock* block,
                                                         const TerminationConfig& cfg = {}) {
    if (trace.empty()) throw std::invalid_argument("termination check needs a nonempty trace");
    TerminationMonitor monitor(cfg, block && block->family == TerrainFamily::kPile, 0.0);
    for (size_t i = 0; i < trace.size(); ++i)
        if (auto event = monitor.step(trace[i], i)) return event;
    return std::nullopt;
}

// reached the goal and survived to the horizon
inline bool episode_success(const Vec3& final_goal_relative,
                            const std::optional<TerminationEvent>& termination,
                            const TerminationConfig& cfg = {}) {
    const bool survived = !termination || termination->reason == TerminationReason::kTimeout;
    return survived &&
           std::hypot(final_goal_relative.x, final_goal_relative.y) < cfg.success_radius;
}

// ======================================================
// Observation assembly
// ======================================================
inline constexpr int kGoalBlockDim = 4;  // dx, dy, distance, heading
inline constexpr int kActorObsDim =
    kGoalBlockDim + 2 + kActionHistoryLen * kJointCount +
    kProprioHistoryLen * (3 + 3 + kJointCount + kJointCount);
inline constexpr int kHeightMapDim = HeightMap::kSize * HeightMap::kSize;
inline constexpr int kCriticObsDim = kActorObsDim + 3 + kHeightMapDim;
static_assert(kActorObsDim == 506);
static_assert(kCriticObsDim == 1598);

struct ObservationVector {
    std::vector<double> scalars;
    const VoxelGrid* grid = nullptr;
};

// Fixed-order scalar concatenation. Layout: goal block (4), elapsed, left,
// action history (oldest first), then per-term proprio histories (oldest
// first): angular velocity, gravity, joint positions, joint velocities. The
// privileged tail appends the base-frame linear velocity and the flattened
// height map.
inline ObservationVector assemble_observation(const EpisodeState& state, const VoxelGrid& grid,
                                              bool privileged,
                                              const RunningNormalizer* normalizer = nullptr,
                                              const HeightMap* height_map = nullptr) {
    if (grid.bounds.cells_x() != 32 || grid.bounds.cells_y() != 32 ||
        grid.bounds.cells_z() != 40)
        throw std::invalid_argument("observation expects the 32x32x40 grid");
    if (privileged && height_map == nullptr)
        throw std::invalid_argument("privileged observation needs a height map");

    ObservationVector obs;
    obs.grid = &grid;
    std::vector<double>& v = obs.scalars;
    v.reserve(privileged ? kCriticObsDim : kActorObsDim);

    const double dx = state.goal_relative.x;
    const double dy = state.goal_relative.y;
    v.push_back(dx);
    v.push_back(dy);
    v.push_back(std::hypot(dx, dy));
    v.push_back(std::atan2(dy, dx));
    v.push_back(state.elapsed);
    v.push_back(state.time_left());

    for (const auto& action : state.action_history)
        v.insert(v.end(), action.begin(), action.end());
    for (const ProprioFrame& f : state.proprio_history) {
        v.push_back(f.angular_velocity.x);
        v.push_back(f.angular_velocity.y);
        v.push_back(f.angular_velocity.z);
    }
    for (const ProprioFrame& f : state.proprio_history) {
        v.push_back(f.gravity.x);
        v.push_back(f.gravity.y);
        v.push_back(f.gravity.z);
    }
    for (const ProprioFrame& f : state.proprio_history) v.insert(v.end(), f.q.begin(), f.q.end());
    for (const ProprioFrame& f : state.proprio_history)
        v.insert(v.end(), f.qd.begin(), f.qd.end());

    if (privileged) {
        const Vec3 v_base = state.base_pose.rotate_inverse(state.linear_velocity);
        v.push_back(v_base.x);
        v.push_back(v_base.y);
        v.push_back(v_base.z);
        v.insert(v.end(), height_map->values.begin(), height_map->values.end());
    }

    const size_t expect = privileged ? kCriticObsDim : kActorObsDim;
    if (v.size() != expect) throw std::logic_error("observation assembly length drift");
    if (normalizer) v = normalizer->apply(v);
    return obs;
}

// ======================================================
// Left/right mirror maps
// ======================================================

// 29 joints: two 6-joint legs, a 3-joint waist, two 7-joint arms. Mirroring
// swaps the left/right chains and negates roll and yaw axes.
struct JointMirror {
    std::array<int, kJointCount> index{};
    std::array<double, kJointCount> sign{};
};

inline const JointMirror& joint_mirror() {
    static const JointMirror table = [] {
        JointMirror t;
        // per-chain axis signs: pitch +, roll -, yaw -
        const double leg[6] = {1, -1, -1, 1, 1, -1};   // hip p/r/y, knee, ankle p/r
        const double waist[3] = {-1, -1, 1};           // yaw, roll, pitch
        const double arm[7] = {1, -1, -1, 1, -1, 1, -1};  // shoulder p/r/y, elbow, wrist r/p/y
        for (int i = 0; i < 6; ++i) {
            t.index[i] = i + 6;
            t.index[i + 6] = i;
            t.sign[i] = t.sign[i + 6] = leg[i];
        }
        for (int i = 0; i < 3; ++i) {
            t.index[12 + i] = 12 + i;
            t.sign[12 + i] = waist[i];
        }
        for (int i = 0; i < 7; ++i) {
            t.index[15 + i] = 22 + i;
            t.index[22 + i] = 15 + i;
            t.sign[15 + i] = t.sign[22 + i] = arm[i];
        }
        return t;
    }();
    return table;
}

namespace detail {

inline void mirror_joint_span(std::vector<double>& v, size_t offset) {
    const JointMirror& m = joint_mirror();
    std::array<double, kJointCount> src;
    for (int i = 0; i < kJointCount; ++i) src[i] = v[offset + i];
    for (int i = 0; i < kJointCount; ++i) v[offset + i] = m.sign[i] * src[m.index[i]];
}

}  // namespace detail

// Mirrors an observation across the robot's forward axis: y components flip,
// angular terms flip their x/z components, joints swap left for right, the
// grid and height map flip their lateral rows. Applying it twice is identity.
inline ObservationVector flip_observation(const ObservationVector& obs, VoxelGrid& flipped_grid) {
    if (obs.scalars.size() != kActorObsDim && obs.scalars.size() != kCriticObsDim)
        throw std::invalid_argument("unrecognized observation length");
    if (obs.grid == nullptr) throw std::invalid_argument("observation carries no grid");

    ObservationVector out;
    out.scalars = obs.scalars;
    std::vector<double>& v = out.scalars;

    v[1] = -v[1];  // lateral goal offset
    v[3] = -v[3];  // heading angle
    size_t at = 6;
    for (int f = 0; f < kActionHistoryLen; ++f, at += kJointCount)
        detail::mirror_joint_span(v, at);
    for (int f = 0; f < kProprioHistoryLen; ++f, at += 3) {
        v[at] = -v[at];          // roll rate
        v[at + 2] = -v[at + 2];  // yaw rate
    }
    for (int f = 0; f < kProprioHistoryLen; ++f, at += 3) v[at + 1] = -v[at + 1];  // gravity y
    for (int f = 0; f < kProprioHistoryLen; ++f, at += kJointCount)
        detail::mirror_joint_span(v, at);
    for (int f = 0; f < kProprioHistoryLen; ++f, at += kJointCount)
        detail::mirror_joint_span(v, at);

    if (obs.scalars.size() == kCriticObsDim) {
        v[at + 1] = -v[at + 1];  // lateral base velocity
        at += 3;
        for (int iy = 0; iy < HeightMap::kSize / 2; ++iy)
            for (int ix = 0; ix < HeightMap::kSize; ++ix)
                std::swap(v[at + static_cast<size_t>(iy) * HeightMap::kSize + ix],
                          v[at + static_cast<size_t>(HeightMap::kSize - 1 - iy) * HeightMap::kSize +
                            ix]);
        at += kHeightMapDim;
    }
    if (at != v.size()) throw std::logic_error("observation flip length drift");

    flipped_grid = flip_y(*obs.grid);
    out.grid = &flipped_grid;
    return out;
}

// ======================================================
// Scripted episode traces
// ======================================================

// One 20 ms control tick of the kinematic puppet driving replay and pipeline
// runs. Column order of the CSV form matches the field order here.
struct TraceFrame {
    int tick = 0;
    double time = 0.0;
    Vec3 base_position{0, 0, 0};
    double roll = 0.0, pitch = 0.0, yaw = 0.0;
    Vec3 linear_velocity{0, 0, 0};
    Vec3 angular_velocity{0, 0, 0};
    std::array<double, kJointCount> q{};
    std::array<double, kJointCount> qd{};
    Vec3 foot_left{0, 0, 0};
    Vec3 foot_right{0, 0, 0};
    std::array<double, kContactBodyCount> contact_forces{};
    std::array<double, kJointCount> action{};

    RigidTransform base_transform() const {
        return {Mat3::rotation_z(yaw) * Mat3::rotation_y(pitch) * Mat3::rotation_x(roll),
                base_position};
    }
};

inline constexpr int kTraceColumns = 2 + 3 + 3 + 3 + 3 + kJointCount * 2 + 6 +
                                     kContactBodyCount + kJointCount;
static_assert(kTraceColumns == 112);

inline EpisodeState to_state(const TraceFrame& f, const Vec3& goal, double horizon = 10.0) {
    EpisodeState s;
    s.base_pose = f.base_transform();
    s.goal_relative = s.base_pose.rotate_inverse(goal - f.base_position);
    s.elapsed = f.time;
    s.horizon = horizon;
    s.linear_velocity = f.linear_velocity;
    s.angular_velocity = f.angular_velocity;
    s.gravity = s.base_pose.rotate_inverse({0, 0, -1});
    s.q = f.q;
    s.qd = f.qd;
    s.feet = {f.foot_left, f.foot_right};
    s.contact_forces = f.contact_forces;
    return s;
}

inline std::string trace_csv_header() {
    std::ostringstream out;
    out << "tick,t,px,py,pz,roll,pitch,yaw,vx,vy,vz,wx,wy,wz";
    for (int i = 0; i < kJointCount; ++i) out << ",q" << i;
    for (int i = 0; i < kJointCount; ++i) out << ",qd" << i;
    out << ",foot_l_x,foot_l_y,foot_l_z,foot_r_x,foot_r_y,foot_r_z";
    out << ",f_torso,f_hip_l,f_hip_r,f_knee_l,f_knee_r";
    for (int i = 0; i < kJointCount; ++i) out << ",a" << i;
    return out.str();
}

inline void save_trace_csv(const std::vector<TraceFrame>& frames, std::ostream& out) {
    out << trace_csv_header() << "\n";
    out.precision(17);
    for (const TraceFrame& f : frames) {
        out << f.tick << ',' << f.time;
        out << ',' << f.base_position.x << ',' << f.base_position.y << ',' << f.base_position.z;
        out << ',' << f.roll << ',' << f.pitch << ',' << f.yaw;
        out << ',' << f.linear_velocity.x << ',' << f.linear_velocity.y << ','
            << f.linear_velocity.z;
        out << ',' << f.angular_velocity.x << ',' << f.angular_velocity.y << ','
            << f.angular_velocity.z;
        for (double x : f.q) out << ',' << x;
        for (double x : f.qd) out << ',' << x;
        out << ',' << f.foot_left.x << ',' << f.foot_left.y << ',' << f.foot_left.z;
        out << ',' << f.foot_right.x << ',' << f.foot_right.y << ',' << f.foot_right.z;
        for (double x : f.contact_forces) out << ',' << x;
        for (double x : f.action) out << ',' << x;
        out << '\n';
    }
}

inline void save_trace_csv(const std::vector<TraceFrame>& frames, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    save_trace_csv(frames, out);
}

inline std::vector<TraceFrame> load_trace_csv(std::istream& in) {
    std::vector<TraceFrame> frames;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trace file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> cols;
        cols.reserve(kTraceColumns);
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            size_t used = 0;
            const double value = std::stod(cell, &used);
            if (used != cell.size()) throw std::runtime_error("bad trace cell: " + cell);
            cols.push_back(value);
        }
        if (static_cast<int>(cols.size()) != kTraceColumns)
            throw std::runtime_error("trace row must have 112 columns");
        TraceFrame f;
        size_t at = 0;
        f.tick = static_cast<int>(std::llround(cols[at++]));
        f.time = cols[at++];
        f.base_position = {cols[at], cols[at + 1], cols[at + 2]};
        at += 3;
        f.roll = cols[at++];
        f.pitch = cols[at++];
        f.yaw = cols[at++];
        f.linear_velocity = {cols[at], cols[at + 1], cols[at + 2]};
        at += 3;
        f.angular_velocity = {cols[at], cols[at + 1], cols[at + 2]};
        at += 3;
        for (int i = 0; i < kJointCount; ++i) f.q[i] = cols[at++];
        for (int i = 0; i < kJointCount; ++i) f.qd[i] = cols[at++];
        f.foot_left = {cols[at], cols[at + 1], cols[at + 2]};
        at += 3;
        f.foot_right = {cols[at], cols[at + 1], cols[at + 2]};
        at += 3;
        for (int i = 0; i < kContactBodyCount; ++i) f.contact_forces[i] = cols[at++];
        for (int i = 0; i < kJointCount; ++i) f.action[i] = cols[at++];
        if (!frames.empty() && f.time <= frames.back().time)
            throw std::runtime_error("trace timestamps must strictly increase");
        frames.push_back(f);
    }
    return frames;
}

inline std::vector<TraceFrame> load_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return load_trace_csv(in);
}

// standing feet placement relative to the base, for synthetic scripts
inline void place_feet(TraceFrame& f, double stance_width = 0.3, double foot_z = 0.0) {
    const RigidTransform pose = f.base_transform();
    f.foot_left = pose.apply({0.0, stance_width / 2, 0.0});
    f.foot_right = pose.apply({0.0, -stance_width / 2, 0.0});
    f.foot_left.z = foot_z;
    f.foot_right.z = foot_z;
}

inline std::vector<TraceFrame> make_stationary_script(const Vec3& position, double duration,
                                                      double base_height = 0.8) {
    std::vector<TraceFrame> frames;
    const int ticks = static_cast<int>(std::llround(duration / kControlDt));
    for (int i = 0; i <= ticks; ++i) {
        TraceFrame f;
        f.tick = i;
        f.time = i * kControlDt;
        f.base_position = {position.x, position.y, position.z + base_height};
        place_feet(f, 0.3, position.z);
        frames.push_back(f);
    }
    return frames;
}

inline std::vector<TraceFrame> make_line_script(const Vec3& from, const Vec3& to, double duration,
                                                double base_height = 0.8) {
    std::vector<TraceFrame> frames;
    const int ticks = static_cast<int>(std::llround(duration / kControlDt));
    const Vec3 delta = to - from;
    const Vec3 velocity = delta * (1.0 / duration);
    const double yaw = std::atan2(delta.y, delta.x);
    for (int i = 0; i <= ticks; ++i) {
        TraceFrame f;
        f.tick = i;
        f.time = i * kControlDt;
        const double u = ticks > 0 ? static_cast<double>(i) / ticks : 0.0;
        const Vec3 p = from + delta * u;
        f.base_position = {p.x, p.y, p.z + base_height};
        f.yaw = yaw;
        f.linear_velocity = velocity;
        place_feet(f, 0.3, p.z);
        frames.push_back(f);
    }
    return frames;
}

// ======================================================
// Reward replay over a scripted trace
// ======================================================
struct RewardRow {
    int tick = 0;
    double reach = 0.0;
    double velocity_direction = 0.0;
    double head_height = 0.0;
    double feet_clearance = 0.0;
    std::optional<TerminationReason> termination;
};

inline constexpr double kHeadAboveBase = 0.5;  // puppet head height over the base origin

// Evaluates the reward terms and termination monitor tick by tick. Rows stop
// at (and include) the terminating frame.
inline std::vector<RewardRow> replay_rewards(const TerrainBlock& block,
                                             const std::vector<TraceFrame>& frames,
                                             const Vec3& goal, const RewardConfig& reward_cfg = {},
                                             const TerminationConfig& termination_cfg = {}) {
    std::vector<RewardRow> rows;
    TerminationMonitor monitor(termination_cfg, block.family == TerrainFamily::kPile, 0.0);
    for (size_t i = 0; i < frames.size(); ++i) {
        const TraceFrame& f = frames[i];
        const EpisodeState s = to_state(f, goal, reward_cfg.horizon);

        RewardRow row;
        row.tick = f.tick;
        row.reach = r_reach(std::hypot(goal.x - f.base_position.x, goal.y - f.base_position.y),
                            f.time, reward_cfg);

        const Vec3 goal_dir = detail::horizontal_unit(goal - f.base_position,
                                                      detail::horizontal_unit(
                                                          s.base_pose.rotate({1, 0, 0})));
        const ObstacleSet obstacles = make_obstacle_set(block, f.base_position, reward_cfg);
        const Vec3 field = direction_field(f.base_position, goal_dir, obstacles, reward_cfg);
        row.velocity_direction = r_velocity_direction(f.linear_velocity, field);

        const double head_est =
            lookahead_height(block, s.base_pose, goal_dir, reward_cfg.head_lookahead,
                             reward_cfg.patch_size, reward_cfg.head_offset,
                             reward_cfg.patch_samples);
        row.head_height = r_head_height(head_est, f.base_position.z + kHeadAboveBase, reward_cfg);

        const double feet_est =
            lookahead_height(block, s.base_pose, goal_dir, reward_cfg.foot_lookahead,
                             reward_cfg.patch_size, 0.0, reward_cfg.patch_samples);
        const double foot_height = std::max(f.foot_left.z, f.foot_right.z);
        row.feet_clearance = r_feet_clearance(feet_est, foot_height, reward_cfg);

        if (auto event = monitor.step(s, i)) {
            row.termination = event->reason;
            rows.push_back(row);
            break;
        }
        rows.push_back(row);
    }
    return rows;
}

inline void save_reward_csv(const std::vector<RewardRow>& rows, std::ostream& out) {
    out << "tick,r_reach,r_velocity_direction,r_head_height,r_feet_clearance,termination\n";
    out.precision(17);
    for (const RewardRow& r : rows) {
        out << r.tick << ',' << r.reach << ',' << r.velocity_direction << ',' << r.head_height
            << ',' << r.feet_clearance << ','
            << (r.termination ? termination_name(*r.termination) : "none") << '\n';
    }
}

inline void save_reward_csv(const std::vector<RewardRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    save_reward_csv(rows, out);
}

}  // namespace vxs
