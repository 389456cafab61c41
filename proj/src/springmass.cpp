#include "splatsim/springmass.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "splatsim/error.hpp"
#include "splatsim/random.hpp"
#include "splatsim/spatial.hpp"

namespace splatsim {

namespace {

constexpr double kDegenerateLength = 1e-9;
// Below this many items a parallel region costs more than it saves.
constexpr std::size_t kParallelMin = 2048;

bool finite(const Vec3& a) { return a.allFinite(); }

}  // namespace

void SimParams::validate() const {
  if (!(frame_dt > 0.0)) throw InvalidArgument("frame_dt must be > 0");
  if (substeps < 1) throw InvalidArgument("substeps must be >= 1");
  const double coeffs[] = {spring_damping,     global_drag,
                           self_collision_radius, contact_offset,
                           contact_stiffness,  friction_mu_ground,
                           friction_mu_robot,  friction_mu_mesh};
  for (double c : coeffs) {
    if (!(c >= 0.0)) throw InvalidArgument("simulation coefficients must be >= 0");
  }
  if (!gravity.allFinite()) throw InvalidArgument("gravity must be finite");
}

void ContactReport::reset(std::size_t links, std::size_t particles) {
  link_force.assign(links, 0.0);
  link_penalty_force.assign(links, 0.0);
  static_force = 0.0;
  ground_force = 0.0;
  particle_contact.assign(particles, 0);
}

void ContactReport::merge(const ContactReport& other) {
  if (link_force.size() < other.link_force.size()) {
    link_force.resize(other.link_force.size(), 0.0);
    link_penalty_force.resize(other.link_force.size(), 0.0);
  }
  for (std::size_t l = 0; l < other.link_force.size(); ++l) {
    link_force[l] += other.link_force[l];
    link_penalty_force[l] =
        std::max(link_penalty_force[l], other.link_penalty_force[l]);
  }
  static_force += other.static_force;
  ground_force += other.ground_force;
  if (particle_contact.size() < other.particle_contact.size()) {
    particle_contact.resize(other.particle_contact.size(), 0);
  }
  for (std::size_t i = 0; i < other.particle_contact.size(); ++i) {
    particle_contact[i] |= other.particle_contact[i];
  }
}

double ContactReport::total_link_force() const {
  return std::accumulate(link_force.begin(), link_force.end(), 0.0);
}

SpringMassModel::SpringMassModel(std::vector<Vec3> positions,
                                 std::vector<double> masses,
                                 std::vector<Spring> springs, SimParams p)
    : x(std::move(positions)),
      v(x.size(), Vec3::Zero()),
      mass(std::move(masses)),
      params(p),
      springs_(std::move(springs)),
      pinned_(x.size(), 0) {
  validate();
  build_adjacency();
}

void SpringMassModel::validate() const {
  params.validate();
  const int n = static_cast<int>(x.size());
  if (mass.size() != x.size()) throw InvalidArgument("mass count != particle count");
  for (int i = 0; i < n; ++i) {
    if (!(mass[i] > 0.0)) {
      throw InvalidArgument("particle " + std::to_string(i) + " has mass <= 0");
    }
    if (!finite(x[i])) {
      throw InvalidArgument("particle " + std::to_string(i) + " is not finite");
    }
  }
  std::vector<std::pair<int, int>> keys;
  keys.reserve(springs_.size());
  for (std::size_t s = 0; s < springs_.size(); ++s) {
    const Spring& sp = springs_[s];
    if (sp.i < 0 || sp.j < 0 || sp.i >= n || sp.j >= n || sp.i == sp.j) {
      throw InvalidArgument("spring " + std::to_string(s) + " has invalid endpoints");
    }
    if (!(sp.rest_length > 0.0) || !(sp.stiffness > 0.0)) {
      throw InvalidArgument("spring " + std::to_string(s) +
                            " needs positive rest length and stiffness");
    }
    keys.emplace_back(std::min(sp.i, sp.j), std::max(sp.i, sp.j));
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw InvalidArgument("duplicate spring");
  }
}

void SpringMassModel::build_adjacency() {
  const std::size_t n = x.size();
  adj_offset_.assign(n + 1, 0);
  for (const Spring& s : springs_) {
    ++adj_offset_[s.i + 1];
    ++adj_offset_[s.j + 1];
  }
  std::partial_sum(adj_offset_.begin(), adj_offset_.end(), adj_offset_.begin());
  adj_.resize(2 * springs_.size());
  std::vector<int> fill(adj_offset_.begin(), adj_offset_.end() - 1);
  for (std::size_t s = 0; s < springs_.size(); ++s) {
    const Spring& sp = springs_[s];
    adj_[fill[sp.i]++] = {static_cast<int>(s), sp.j};
    adj_[fill[sp.j]++] = {static_cast<int>(s), sp.i};
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adj_.begin() + adj_offset_[i], adj_.begin() + adj_offset_[i + 1],
              [](const auto& a, const auto& b) { return a.second < b.second; });
  }
}

std::span<const std::pair<int, int>> SpringMassModel::incident(int i) const {
  return {adj_.data() + adj_offset_[i],
          static_cast<std::size_t>(adj_offset_[i + 1] - adj_offset_[i])};
}

bool SpringMassModel::connected(int a, int b) const {
  const auto inc = incident(a);
  const auto it = std::lower_bound(
      inc.begin(), inc.end(), b,
      [](const std::pair<int, int>& e, int key) { return e.second < key; });
  return it != inc.end() && it->second == b;
}

void SpringMassModel::set_stiffness(std::span<const double> stiffness) {
  if (stiffness.size() != springs_.size()) {
    throw InvalidArgument("stiffness vector length != spring count");
  }
  for (std::size_t s = 0; s < springs_.size(); ++s) {
    if (!(stiffness[s] > 0.0)) throw InvalidArgument("stiffness must be > 0");
    springs_[s].stiffness = stiffness[s];
  }
}

void SpringMassModel::set_uniform_stiffness(double y) {
  if (!(y > 0.0)) throw InvalidArgument("stiffness must be > 0");
  for (Spring& s : springs_) s.stiffness = y;
}

void SpringMassModel::set_pinned(int particle, bool pinned) {
  pinned_.at(particle) = pinned ? 1 : 0;
}

double SpringMassModel::damping_for_ratio(double zeta) const {
  if (springs_.empty()) return 0.0;
  std::vector<double> c(springs_.size());
  for (std::size_t s = 0; s < springs_.size(); ++s) {
    const Spring& sp = springs_[s];
    const double m = mass[sp.i] * mass[sp.j] / (mass[sp.i] + mass[sp.j]);
    c[s] = 2.0 * zeta * std::sqrt(sp.stiffness * m);
  }
  const auto mid = c.begin() + static_cast<std::ptrdiff_t>(c.size() / 2);
  std::nth_element(c.begin(), mid, c.end());
  return *mid;
}

Vec3 SpringMassModel::momentum() const {
  Vec3 p = Vec3::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) p += mass[i] * v[i];
  return p;
}

double SpringMassModel::kinetic_energy() const {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e += 0.5 * mass[i] * v[i].squaredNorm();
  return e;
}

double SpringMassModel::spring_energy() const {
  double e = 0.0;
  for (const Spring& s : springs_) {
    const double stretch = (x[s.j] - x[s.i]).norm() - s.rest_length;
    e += 0.5 * s.stiffness * stretch * stretch;
  }
  return e;
}

std::uint64_t SpringMassModel::state_hash() const {
  Fnv1a h;
  for (const Vec3& p : x) h.add(std::span<const double>(p.data(), 3));
  for (const Vec3& q : v) h.add(std::span<const double>(q.data(), 3));
  return h.value();
}

void step_springs(SpringMassModel& model, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  const auto& springs = model.springs();
  const double c = model.params.spring_damping;
  std::vector<Vec3> force(springs.size());
  std::vector<std::uint8_t> degenerate(springs.size(), 0);
#pragma omp parallel for schedule(static) if (springs.size() > kParallelMin)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(springs.size()); ++s) {
    const Spring& sp = springs[s];
    const Vec3 d = model.x[sp.j] - model.x[sp.i];
    const double len = d.norm();
    if (len < kDegenerateLength) {
      force[s].setZero();
      degenerate[s] = 1;
      continue;
    }
    const Vec3 u = d / len;
    const double rel = (model.v[sp.j] - model.v[sp.i]).dot(u);
    force[s] = (sp.stiffness * (len - sp.rest_length) + c * rel) * u;
  }
  model.degenerate_springs +=
      std::accumulate(degenerate.begin(), degenerate.end(), std::uint64_t{0});
  const int n = static_cast<int>(model.size());
#pragma omp parallel for schedule(static) if (model.size() > kParallelMin)
  for (int i = 0; i < n; ++i) {
    if (model.pinned(i)) continue;
    Vec3 f = Vec3::Zero();
    for (const auto& [s, other] : model.incident(i)) {
      f += springs[s].i == i ? force[s] : Vec3(-force[s]);
    }
    model.v[i] += dt * (model.params.gravity + f / model.mass[i]);
  }
}

void step_springs_implicit(SpringMassModel& model, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  const auto& springs = model.springs();
  const double c = model.params.spring_damping;
  const std::size_t m = springs.size();
  const int n = static_cast<int>(model.size());

  // Every spring block has the form alpha u u^T + beta I, so only the
  // direction and two scalars are stored: S = dt C + dt^2 K for the system
  // and K for the right-hand side.
  struct Block {
    Vec3 u;
    double sa, sb;
  };
  std::vector<Block> sblock(m);
  std::vector<double> fmag(m), ka(m), kb(m);
  std::vector<std::uint8_t> degenerate(m, 0);
#pragma omp parallel for schedule(static) if (m > kParallelMin)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(m); ++s) {
    const Spring& sp = springs[s];
    const Vec3 d = model.x[sp.j] - model.x[sp.i];
    const double len = d.norm();
    if (len < kDegenerateLength) {
      sblock[s] = {Vec3::Zero(), 0.0, 0.0};
      fmag[s] = ka[s] = kb[s] = 0.0;
      degenerate[s] = 1;
      continue;
    }
    const Vec3 u = d / len;
    const double rel = (model.v[sp.j] - model.v[sp.i]).dot(u);
    fmag[s] = sp.stiffness * (len - sp.rest_length) + c * rel;
    const double geo = std::max(0.0, 1.0 - sp.rest_length / len);
    ka[s] = sp.stiffness * (1.0 - geo);
    kb[s] = sp.stiffness * geo;
    sblock[s] = {u, dt * c + dt * dt * ka[s], dt * dt * kb[s]};
  }
  model.degenerate_springs +=
      std::accumulate(degenerate.begin(), degenerate.end(), std::uint64_t{0});

  std::vector<Vec3> b(n, Vec3::Zero());
  std::vector<Mat3> precond(n, Mat3::Identity());
#pragma omp parallel for schedule(static) if (model.size() > kParallelMin)
  for (int i = 0; i < n; ++i) {
    if (model.pinned(i)) continue;
    Vec3 f = model.mass[i] * model.params.gravity;
    Vec3 kv = Vec3::Zero();
    Mat3 diag = model.mass[i] * Mat3::Identity();
    for (const auto& [s, other] : model.incident(i)) {
      const Vec3& u = sblock[s].u;
      f += (springs[s].i == i ? fmag[s] : -fmag[s]) * u;
      const Vec3 dvel = model.v[i] - model.v[other];
      kv += ka[s] * u.dot(dvel) * u + kb[s] * dvel;
      diag += sblock[s].sa * (u * u.transpose());
      diag.diagonal().array() += sblock[s].sb;
    }
    b[i] = dt * f - dt * dt * kv;
    precond[i] = diag.inverse();
  }

  // System blocks laid out in adjacency order so the product streams
  // through memory. Pinned entries of every vector passed here are zero.
  struct Entry {
    double ux, uy, uz, sa, sb;
    int other;
  };
  const auto all = model.incident_all();
  std::vector<Entry> entries(all.size());
#pragma omp parallel for schedule(static) if (all.size() > kParallelMin)
  for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(all.size()); ++e) {
    const Block& blk = sblock[all[e].first];
    entries[e] = {blk.u.x(), blk.u.y(), blk.u.z(), blk.sa, blk.sb, all[e].second};
  }
  const auto offsets = model.incident_offsets();
  auto apply = [&](const std::vector<Vec3>& in, std::vector<Vec3>& out) {
#pragma omp parallel for schedule(static) if (model.size() > kParallelMin)
    for (int i = 0; i < n; ++i) {
      if (model.pinned(i)) {
        out[i].setZero();
        continue;
      }
      const Vec3 xi = in[i];
      double ax = 0.0, ay = 0.0, az = 0.0;
      for (int e = offsets[i]; e < offsets[i + 1]; ++e) {
        const Entry& en = entries[e];
        const Vec3& xj = in[en.other];
        const double dx = xi.x() - xj.x();
        const double dy = xi.y() - xj.y();
        const double dz = xi.z() - xj.z();
        const double proj = en.sa * (en.ux * dx + en.uy * dy + en.uz * dz);
        ax += proj * en.ux + en.sb * dx;
        ay += proj * en.uy + en.sb * dy;
        az += proj * en.uz + en.sb * dz;
      }
      out[i] = model.mass[i] * xi + Vec3(ax, ay, az);
    }
  };
  auto dot = [n](const std::vector<Vec3>& a, const std::vector<Vec3>& bb) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += a[i].dot(bb[i]);
    return sum;
  };

  // Preconditioned conjugate gradients, warm-started from the previous
  // increment (or free fall on the first call).
  std::vector<Vec3> dv(n, Vec3::Zero());
  const bool warm = model.warm_start.size() == static_cast<std::size_t>(n);
  for (int i = 0; i < n; ++i) {
    if (!model.pinned(i)) dv[i] = warm ? model.warm_start[i] : Vec3(dt * model.params.gravity);
  }
  std::vector<Vec3> r(n), z(n), p(n), ap(n);
  apply(dv, ap);
  for (int i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  const double bnorm = std::sqrt(dot(b, b));
  const double stop = model.params.solver_tolerance * std::max(bnorm, 1e-300);
  for (int i = 0; i < n; ++i) z[i] = precond[i] * r[i];
  p = z;
  double rz = dot(r, z);
  for (int it = 0; it < model.params.solver_max_iters; ++it) {
    if (std::sqrt(dot(r, r)) <= stop) break;
    ++model.solver_iterations;
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      dv[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
      z[i] = precond[i] * r[i];
    }
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }

  // The exact solve conserves momentum; strip what the truncated one adds.
  bool any_pinned = false;
  for (int i = 0; i < n && !any_pinned; ++i) any_pinned = model.pinned(i);
  if (!any_pinned && n > 0) {
    Vec3 want = Vec3::Zero();
    Vec3 got = Vec3::Zero();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      want += dt * model.mass[i] * model.params.gravity;
      got += model.mass[i] * dv[i];
      total += model.mass[i];
    }
    const Vec3 shift = (want - got) / total;
    for (int i = 0; i < n; ++i) dv[i] += shift;
  }
  for (int i = 0; i < n; ++i) {
    if (!model.pinned(i)) model.v[i] += dv[i];
  }
  model.warm_start = std::move(dv);
}

void integrate_forces(SpringMassModel& model, double dt) {
  if (model.params.integrator == Integrator::kExplicit) {
    step_springs(model, dt);
  } else {
    step_springs_implicit(model, dt);
  }
  if (model.params.global_drag > 0.0) {
    const double k = std::exp(-model.params.global_drag * dt);
    for (std::size_t i = 0; i < model.size(); ++i) {
      if (!model.pinned(static_cast<int>(i))) model.v[i] *= k;
    }
  }
}

std::vector<std::pair<int, int>> self_collision_pairs(
    const SpringMassModel& model) {
  const double r = model.params.self_collision_radius;
  if (!(r > 0.0) || model.size() < 2) return {};
  const UniformGrid grid(model.x, r);
  auto pairs = grid.pairs_within(r);
  std::erase_if(pairs, [&](const std::pair<int, int>& pr) {
    return model.connected(pr.first, pr.second);
  });
  return pairs;
}

void self_collision(SpringMassModel& model) {
  const auto pairs = self_collision_pairs(model);
  if (pairs.empty()) return;
  const std::size_t n = model.size();
  std::vector<Vec3> delta(n, Vec3::Zero());
  std::vector<int> count(n, 0);
  for (const auto& [a, b] : pairs) {
    const double wa = model.inv_mass(a);
    const double wb = model.inv_mass(b);
    if (wa + wb == 0.0) continue;
    const Vec3 d = model.x[b] - model.x[a];
    const double len = d.norm();
    if (len < kDegenerateLength) continue;
    const Vec3 nrm = d / len;
    const double approach = (model.v[b] - model.v[a]).dot(nrm);
    if (approach >= 0.0) continue;
    const double j = -approach / (wa + wb);
    delta[a] -= j * wa * nrm;
    delta[b] += j * wb * nrm;
    ++count[a];
    ++count[b];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] > 0) model.v[i] += delta[i] / count[i];
  }
}

namespace {

// Shared zero-restitution response. Returns dv_n applied (>= 0).
double resolve_contact(Vec3& x, Vec3& v, const Vec3& normal,
                       double signed_distance, const Vec3& surface_velocity,
                       double offset, double mu, double dt,
                       double* penetration) {
  const Vec3 rel = v - surface_velocity;
  const double vn = rel.dot(normal);
  if (signed_distance >= offset && signed_distance + dt * vn >= offset) {
    return 0.0;
  }
  double sd = signed_distance;
  *penetration = 0.0;
  if (sd < offset) {
    *penetration = offset - sd;
    x += *penetration * normal;
    sd = offset;
  }
  // Allowed approach speed brings the particle exactly to the offset
  // surface by the end of the substep.
  const double vn_min = (offset - sd) / dt;
  const double dvn = std::max(0.0, vn_min - vn);
  if (dvn == 0.0) return 0.0;
  Vec3 dv = dvn * normal;
  const Vec3 vt = rel - vn * normal;
  const double vt_norm = vt.norm();
  if (vt_norm > 0.0 && mu > 0.0) {
    dv -= std::min(vt_norm, mu * dvn) / vt_norm * vt;
  }
  v += dv;
  return dvn;
}

}  // namespace

ContactImpulse collide_mesh(SpringMassModel& model,
                            const MeshContactInput& input, double dt,
                            std::span<std::uint8_t> contact_flags) {
  ContactImpulse out;
  if (input.field == nullptr || model.size() == 0) return out;
  const double offset = model.params.contact_offset;
  const RigidTransform inv_next = input.pose_next.inverse();
  const auto& box = input.field->bounds();
  // Upper bound on surface speed from the bounding-box corners.
  double surface_speed = 0.0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner = box.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c));
    surface_speed = std::max(
        surface_speed,
        (input.pose_next.apply(corner) - input.pose_prev.apply(corner)).norm() / dt);
  }
  const int n = static_cast<int>(model.size());
  for (int i = 0; i < n; ++i) {
    if (model.pinned(i)) continue;
    const Vec3 local = inv_next.apply(model.x[i]);
    const double reach = offset + dt * (model.v[i].norm() + surface_speed);
    if (box.exteriorDistance(local) > reach) continue;
    const ClosestPoint cp = input.field->query(local);
    if (cp.signed_distance > reach) continue;
    const Vec3 normal = input.pose_next.apply_vector(cp.normal);
    const Vec3 vs = (input.pose_next.apply(cp.point) -
                     input.pose_prev.apply(cp.point)) / dt;
    double pen = 0.0;
    const double dvn = resolve_contact(model.x[i], model.v[i], normal,
                                       cp.signed_distance, vs, offset,
                                       input.mu, dt, &pen);
    if (dvn > 0.0 || pen > 0.0) {
      out.impulse += model.mass[i] * dvn;
      out.max_penetration = std::max(out.max_penetration, pen);
      if (!contact_flags.empty()) contact_flags[i] = 1;
    }
  }
  return out;
}

ContactImpulse collide_ground(SpringMassModel& model, double z0, double mu,
                              double dt) {
  ContactImpulse out;
  const Vec3 up = Vec3::UnitZ();
  const int n = static_cast<int>(model.size());
  for (int i = 0; i < n; ++i) {
    if (model.pinned(i)) continue;
    double pen = 0.0;
    const double dvn =
        resolve_contact(model.x[i], model.v[i], up, model.x[i].z() - z0,
                        Vec3::Zero(), 0.0, mu, dt, &pen);
    if (pen > 0.0) model.x[i].z() = z0;
    out.impulse += model.mass[i] * dvn;
    out.max_penetration = std::max(out.max_penetration, pen);
  }
  return out;
}

ContactReport simulate_frame(SpringMassModel& model, const FrameInputs& in) {
  const SimParams& prm = model.params;
  prm.validate();
  const int steps = prm.substeps;
  const double h = prm.substep_dt();
  const std::size_t links = in.robot ? in.robot->link_fields.size() : 0;
  ContactReport report;
  report.reset(links, model.size());
  std::vector<double> link_impulse(links, 0.0);
  double static_impulse = 0.0;
  double ground_impulse = 0.0;

  std::vector<Vec3> pin_start;
  if (in.pins) {
    for (std::size_t k = 0; k < in.pins->particles.size(); ++k) {
      const int p = in.pins->particles[k];
      model.set_pinned(p, true);
      pin_start.push_back(model.x[p]);
    }
  }

  std::vector<RigidTransform> prev_poses;
  if (links > 0) prev_poses = in.robot->poses_at(0.0);

  for (int k = 0; k < steps; ++k) {
    const double s1 = static_cast<double>(k + 1) / steps;
    std::vector<Vec3> pin_target;
    if (in.pins) {
      for (std::size_t q = 0; q < in.pins->particles.size(); ++q) {
        const int p = in.pins->particles[q];
        pin_target.push_back(pin_start[q] +
                             s1 * (in.pins->end_positions[q] - pin_start[q]));
        model.v[p] = (pin_target.back() - model.x[p]) / h;
      }
    }

    integrate_forces(model, h);
    if (prm.self_collision_radius > 0.0) self_collision(model);

    if (links > 0) {
      const std::vector<RigidTransform> next_poses = in.robot->poses_at(s1);
      for (std::size_t l = 0; l < links; ++l) {
        const auto& field = in.robot->link_fields[l];
        if (!field) continue;
        const ContactImpulse ci = collide_mesh(
            model, {field.get(), prev_poses[l], next_poses[l], prm.friction_mu_robot},
            h, report.particle_contact);
        link_impulse[l] += ci.impulse;
        report.link_penalty_force[l] =
            std::max(report.link_penalty_force[l],
                     prm.contact_stiffness * ci.max_penetration);
      }
      prev_poses = next_poses;
    }
    for (const StaticCollider& sc : in.static_meshes) {
      static_impulse +=
          collide_mesh(model, {sc.field.get(), sc.pose, sc.pose, prm.friction_mu_mesh},
                       h, report.particle_contact)
              .impulse;
    }
    if (in.ground) {
      ground_impulse +=
          collide_ground(model, *in.ground, prm.friction_mu_ground, h).impulse;
    }

    for (std::size_t i = 0; i < model.size(); ++i) model.x[i] += h * model.v[i];
    if (in.pins) {
      for (std::size_t q = 0; q < in.pins->particles.size(); ++q) {
        model.x[in.pins->particles[q]] = pin_target[q];
      }
    }

    for (std::size_t i = 0; i < model.size(); ++i) {
      if (!finite(model.x[i]) || !finite(model.v[i])) {
        throw SimulationFault(
            "non-finite state at particle " + std::to_string(i), k);
      }
    }
  }

  for (std::size_t l = 0; l < links; ++l) {
    report.link_force[l] = link_impulse[l] / prm.frame_dt;
  }
  report.static_force = static_impulse / prm.frame_dt;
  report.ground_force = ground_impulse / prm.frame_dt;
  return report;
}

namespace {

double finger_force(const ContactReport& report,
                    std::span<const int> finger_links) {
  if (finger_links.empty()) return report.total_link_force();
  double f = 0.0;
  for (int l : finger_links) {
    if (l >= 0 && static_cast<std::size_t>(l) < report.link_force.size()) {
      f += report.link_force[l];
    }
  }
  return f;
}

}  // namespace

double grasp_step(double opening, double closing_speed,
                  const ContactReport& report, double f_max, double frame_dt,
                  std::span<const int> finger_links) {
  if (finger_force(report, finger_links) >= f_max) return opening;
  return std::max(0.0, opening - closing_speed * frame_dt);
}

void grasp_update(GripperState& g, bool close, double speed,
                  const ContactReport& report, double f_max, double frame_dt,
                  std::span<const int> finger_links) {
  if (!close) {
    g.halted = false;
    g.opening = std::min(g.max_opening, g.opening + speed * frame_dt);
    return;
  }
  if (g.halted) return;
  if (finger_force(report, finger_links) >= f_max) {
    g.halted = true;
    return;
  }
  g.opening = std::max(0.0, g.opening - speed * frame_dt);
}

}  // namespace splatsim
