#pragma once

#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vxs/geometry.hpp"
#include "vxs/kv.hpp"
#include "vxs/math.hpp"

namespace vxs {

// ======================================================
// Scan pattern
// ======================================================
struct LidarPattern {
    std::vector<Vec3> offsets;  // unit ray directions in the sensor frame, channel-major
    int channels = 0;
    int azimuth_steps = 0;
    double vertical_fov_deg = 0.0;
};

// Evenly spaced elevations spanning [-fov/2, +fov/2] (a single channel sits at
// the equator), azimuths evenly spaced over [0, 360). Offset order is
// channel-major: index = channel * azimuth_steps + azimuth.
inline LidarPattern make_spherical_pattern(int channels, int azimuth_steps,
                                           double vertical_fov_deg) {
    if (channels < 1 || azimuth_steps < 1)
        throw std::invalid_argument("pattern needs at least one channel and azimuth step");
    if (vertical_fov_deg < 0.0 || vertical_fov_deg > 180.0)
        throw std::invalid_argument("vertical fov must lie in [0, 180] degrees");

    LidarPattern p;
    p.channels = channels;
    p.azimuth_steps = azimuth_steps;
    p.vertical_fov_deg = vertical_fov_deg;
    p.offsets.reserve(static_cast<size_t>(channels) * azimuth_steps);
    for (int c = 0; c < channels; ++c) {
        const double elev_deg =
            channels == 1 ? 0.0
                          : -vertical_fov_deg / 2.0 + c * vertical_fov_deg / (channels - 1);
        const double elev = deg_to_rad(elev_deg);
        const double ce = std::cos(elev), se = std::sin(elev);
        for (int a = 0; a < azimuth_steps; ++a) {
            const double azim = deg_to_rad(a * 360.0 / azimuth_steps);
            p.offsets.push_back({ce * std::cos(azim), ce * std::sin(azim), se});
        }
    }
    return p;
}

// ======================================================
// Scene and scan
// ======================================================
struct LidarPose {
    Vec3 position;        // world meters
    Mat3 orientation = Mat3::identity();  // sensor frame -> world
};

struct SceneInstance {
    const TriangleMesh* mesh = nullptr;
    const Bvh* bvh = nullptr;
    RigidTransform transform = RigidTransform::identity();
    bool dynamic = false;  // true for robot links, false for terrain
};

struct LidarScan {
    std::vector<Vec3> points;  // world-frame hits; misses are omitted
    double timestamp = 0.0;
    int sensor_id = 0;
};

// One sweep: every pattern offset is rotated into world by the sensor
// orientation, cast against every instance, and the nearest hit across all
// instances kept. Pure given a snapshot of transforms.
inline LidarScan scan_scene(const std::vector<SceneInstance>& instances, const LidarPose& pose,
                            const LidarPattern& pattern, double timestamp, int sensor_id = 0,
                            double t_max = kDefaultRayTMax) {
    LidarScan scan;
    scan.timestamp = timestamp;
    scan.sensor_id = sensor_id;
    scan.points.reserve(pattern.offsets.size());
    for (const Vec3& offset : pattern.offsets) {
        const Ray ray{pose.position, pose.orientation.apply(offset), t_max};
        std::optional<RayHit> best;
        for (const SceneInstance& inst : instances) {
            const auto hit = raycast_world(*inst.bvh, *inst.mesh, inst.transform, ray);
            if (hit && (!best || hit->t < best->t)) best = hit;  // first instance wins ties
        }
        if (best) scan.points.push_back(best->point);
    }
    return scan;
}

// ======================================================
// Domain randomization
// ======================================================
struct NoiseConfig {
    double pose_pos_sigma = 0.01;       // meters, sensor position jitter at episode start
    double ray_dir_sigma = kPi / 180.0; // radians, per-ray direction jitter at episode start
    double hit_sigma = 0.01;            // meters, per-hit position noise
    double voxel_dropout_frac = 0.02;   // fraction of occupied cells dropped
    uint64_t seed = 0;

    void validate() const {
        if (pose_pos_sigma < 0 || ray_dir_sigma < 0 || hit_sigma < 0)
            throw std::invalid_argument("noise sigmas must be non-negative");
        if (voxel_dropout_frac < 0.0 || voxel_dropout_frac > 1.0)
            throw std::invalid_argument("dropout fraction must lie in [0, 1]");
    }
};

// Episode-start position jitter; orientation jitter is per-ray (see
// perturb_pattern) so the pose itself carries only the positional part.
inline LidarPose perturb_pose(const LidarPose& pose, const NoiseConfig& cfg, Rng& rng) {
    LidarPose out = pose;
    out.position.x += rng.gaussian(cfg.pose_pos_sigma);
    out.position.y += rng.gaussian(cfg.pose_pos_sigma);
    out.position.z += rng.gaussian(cfg.pose_pos_sigma);
    return out;
}

// Episode-start per-ray jitter: each offset is tilted by a Gaussian angle
// about a random axis perpendicular to it, then held fixed for the episode.
inline LidarPattern perturb_pattern(const LidarPattern& pattern, const NoiseConfig& cfg,
                                    Rng& rng) {
    LidarPattern out = pattern;
    if (cfg.ray_dir_sigma == 0.0) return out;
    for (Vec3& offset : out.offsets) {
        const double angle = rng.gaussian(cfg.ray_dir_sigma);
        Vec3 axis;
        do {
            const Vec3 raw = rng.random_unit_vector();
            axis = raw - offset * raw.dot(offset);  // project into the perpendicular plane
        } while (axis.norm() < 1e-6);
        axis = axis.normalized();
        offset = Mat3::axis_angle(axis, angle).apply(offset).normalized();
    }
    return out;
}

// Independent per-axis Gaussian displacement of every hit.
inline LidarScan perturb_hits(const LidarScan& scan, const NoiseConfig& cfg, Rng& rng) {
    LidarScan out = scan;
    for (Vec3& p : out.points) {
        p.x += rng.gaussian(cfg.hit_sigma);
        p.y += rng.gaussian(cfg.hit_sigma);
        p.z += rng.gaussian(cfg.hit_sigma);
    }
    return out;
}

// ======================================================
// Latency buffer
// ======================================================
// Scans arrive at the sweep rate; queries see the newest scan that is at
// least `delay` old. The delay is sampled once per episode.
class LatencyBuffer {
public:
    explicit LatencyBuffer(double rate_hz = 10.0, double delay_s = 0.15)
        : rate_hz_(rate_hz), delay_(delay_s) {
        if (rate_hz <= 0) throw std::invalid_argument("scan rate must be positive");
        if (delay_s < 0) throw std::invalid_argument("delay must be non-negative");
    }

    double rate_hz() const { return rate_hz_; }
    double delay() const { return delay_; }
    size_t size() const { return queue_.size(); }

    void set_delay(double delay_s) {
        if (delay_s < 0) throw std::invalid_argument("delay must be non-negative");
        delay_ = delay_s;
    }

    double sample_delay(Rng& rng, double min_s = 0.100, double max_s = 0.200) {
        delay_ = rng.uniform(min_s, max_s);
        return delay_;
    }

    void clear() { queue_.clear(); }

    void push(const LidarScan& scan) {
        if (!queue_.empty() && scan.timestamp <= queue_.back().timestamp)
            throw std::invalid_argument("scan pushed out of order");
        queue_.push_back(scan);
    }

    // Newest scan with timestamp <= query_time - delay; strictly older scans
    // can never be returned again and are evicted.
    std::optional<LidarScan> query(double query_time) {
        const double cutoff = query_time - delay_;
        const LidarScan* best = nullptr;
        for (const auto& scan : queue_) {
            if (scan.timestamp <= cutoff) best = &scan;
            else break;
        }
        if (!best) return std::nullopt;
        LidarScan result = *best;
        while (queue_.front().timestamp < result.timestamp) queue_.pop_front();
        return result;
    }

private:
    double rate_hz_;
    double delay_;
    std::deque<LidarScan> queue_;
};

// ======================================================
// Sensor configuration
// ======================================================
struct LidarConfig {
    int channels = 128;
    int azimuth_steps = 360;
    double fov_deg = 95.0;
    double rate_hz = 10.0;
    double delay_min_s = 0.100;
    double delay_max_s = 0.200;
    NoiseConfig noise;

    void validate() const {
        if (channels < 1 || azimuth_steps < 1) throw std::invalid_argument("bad pattern counts");
        if (rate_hz <= 0) throw std::invalid_argument("rate must be positive");
        if (delay_min_s < 0 || delay_max_s < delay_min_s)
            throw std::invalid_argument("delay range must satisfy 0 <= min <= max");
        noise.validate();
    }

    static LidarConfig from_kv(const KvFile& kv) {
        LidarConfig c;
        c.channels = static_cast<int>(kv.get_int("channels", c.channels));
        c.azimuth_steps = static_cast<int>(kv.get_int("azimuth_steps", c.azimuth_steps));
        c.fov_deg = kv.get_double("fov_deg", c.fov_deg);
        c.rate_hz = kv.get_double("rate_hz", c.rate_hz);
        c.delay_min_s = kv.get_double("delay_min_s", c.delay_min_s);
        c.delay_max_s = kv.get_double("delay_max_s", c.delay_max_s);
        c.noise.pose_pos_sigma = kv.get_double("pose_pos_sigma_m", c.noise.pose_pos_sigma);
        c.noise.ray_dir_sigma = kv.get_double("ray_dir_sigma_rad", c.noise.ray_dir_sigma);
        c.noise.hit_sigma = kv.get_double("hit_sigma_m", c.noise.hit_sigma);
        c.noise.voxel_dropout_frac = kv.get_double("dropout_frac", c.noise.voxel_dropout_frac);
        c.noise.seed = kv.get_uint("seed", c.noise.seed);
        c.validate();
        return c;
    }

    KvFile to_kv() const {
        KvFile kv;
        kv.set("channels", channels);
        kv.set("azimuth_steps", azimuth_steps);
        kv.set("fov_deg", fov_deg);
        kv.set("rate_hz", rate_hz);
        kv.set("delay_min_s", delay_min_s);
        kv.set("delay_max_s", delay_max_s);
        kv.set("pose_pos_sigma_m", noise.pose_pos_sigma);
        kv.set("ray_dir_sigma_rad", noise.ray_dir_sigma);
        kv.set("hit_sigma_m", noise.hit_sigma);
        kv.set("dropout_frac", noise.voxel_dropout_frac);
        kv.set("seed", noise.seed);
        return kv;
    }
};

// Torso-relative placements for the two sensors: one on the front chest
// facing forward, one on the back facing rearward. Stand-in values,
// overridable through scene configuration.
inline RigidTransform default_front_sensor_extrinsic() {
    return RigidTransform{Mat3::identity(), {0.15, 0.0, 0.25}};
}
inline RigidTransform default_back_sensor_extrinsic() {
    return RigidTransform{Mat3::rotation_z(kPi), {-0.15, 0.0, 0.25}};
}

// ======================================================
// Point-cloud output
// ======================================================
inline void save_ply(const std::vector<Vec3>& points, std::ostream& out) {
    out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    out.precision(9);
    for (const auto& p : points)
        out << static_cast<float>(p.x) << " " << static_cast<float>(p.y) << " "
            << static_cast<float>(p.z) << "\n";
}

inline void save_ply(const std::vector<Vec3>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_ply(points, out);
}

inline void save_points_csv(const std::vector<Vec3>& points, std::ostream& out) {
    out.precision(17);
    out << "x,y,z\n";
    for (const auto& p : points) out << p.x << "," << p.y << "," << p.z << "\n";
}

inline void save_points_csv(const std::vector<Vec3>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_points_csv(points, out);
}

}  // namespace vxs
