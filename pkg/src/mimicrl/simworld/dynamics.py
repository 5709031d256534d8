"""
Batched planar articulated dynamics in generalized coordinates.

Coordinates are [x, z, pitch, q_1..q_n] for a floating base or [q_1..q_n]
for a fixed base. The mass matrix is assembled from point Jacobians of every
link's center of mass; velocity-product terms come from the exact planar
bias acceleration -sum_s thetadot_s^2 r_s along each chain.
"""

from dataclasses import dataclass

import numpy as np

from .model import RobotModel


@dataclass
class ContactParams:
    k_n: float = 3.0e4
    c_n: float = 300.0
    c_t: float = 300.0
    mu: float = 1.0
    restitution: float = 0.0


@dataclass
class PhysParams:
    """Per-environment physical parameters (leading dim = env)."""

    mass: np.ndarray
    inertia: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    gravity: np.ndarray  # (N, 2) acceleration vector
    mu: np.ndarray
    restitution: np.ndarray

    @classmethod
    def nominal(cls, model: RobotModel, n, g=9.81, contact: ContactParams = None):
        c = contact or ContactParams()
        grav = np.zeros((n, 2))
        grav[:, 1] = -g
        return cls(
            mass=np.tile(model.mass, (n, 1)),
            inertia=np.tile(model.inertia, (n, 1)),
            kp=np.tile(model.kp, (n, 1)),
            kd=np.tile(model.kd, (n, 1)),
            lo=np.tile(model.lo, (n, 1)),
            hi=np.tile(model.hi, (n, 1)),
            gravity=grav,
            mu=np.full(n, c.mu),
            restitution=np.full(n, c.restitution),
        )

    def take(self, idx):
        return PhysParams(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    def assign(self, idx, other):
        for f in self.__dataclass_fields__:
            getattr(self, f)[idx] = getattr(other, f)


def rot(theta, v):
    """Rotate planar vectors v (..., 2) by angles theta (broadcast)."""
    c = np.cos(theta)
    s = np.sin(theta)
    x = v[..., 0]
    z = v[..., 1]
    return np.stack([x * c + z * s, -x * s + z * c], axis=-1)


def perp(r):
    return np.stack([r[..., 1], -r[..., 0]], axis=-1)


class Dynamics:
    def __init__(self, model: RobotModel, contact: ContactParams = None):
        self.m = model
        self.contact = contact or ContactParams()
        L = model.n_links
        # angular Jacobian rows per link (constant)
        jw = model.anc.astype(np.float64)
        self.Jw = jw if not model.fixed_base else jw[:, 1:]
        if not model.fixed_base:
            self.Jw = np.concatenate([np.zeros((L, 2)), jw], axis=1)
        # points: link COMs then contact points
        self.pt_link = np.concatenate([np.arange(L), model.contact_link]).astype(np.int64)
        self.n_com = L
        self.pt_anc = model.anc[self.pt_link].astype(np.float64)  # (K, L)
        self.site_link = np.array([s[1] for s in model.sites], dtype=np.int64)
        self.site_local = np.array([s[2] for s in model.sites], dtype=np.float64).reshape(-1, 2)

    # ------------------------------------------------------------ kinematics
    def split(self, q):
        m = self.m
        n = q.shape[0]
        if m.fixed_base:
            return np.tile(m.base_anchor, (n, 1)), np.zeros(n), q
        return q[:, 0:2], q[:, 2], q[:, 3:]

    def kinematics(self, q):
        """Absolute link angles (N, L) and link origins (N, L, 2)."""
        m = self.m
        root, pitch, jq = self.split(q)
        n = q.shape[0]
        theta = np.zeros((n, m.n_links))
        origin = np.zeros((n, m.n_links, 2))
        theta[:, 0] = pitch
        origin[:, 0] = root
        for k in range(1, m.n_links):
            p = m.parent[k]
            theta[:, k] = theta[:, p] + jq[:, k - 1]
            origin[:, k] = origin[:, p] + rot(theta[:, p], m.joint_pos[k])
        return theta, origin

    def points(self, theta, origin):
        """World positions of link COMs followed by contact points, (N, K, 2)."""
        m = self.m
        local = np.concatenate([m.com, m.contact_local], axis=0)
        th = theta[:, self.pt_link]
        return origin[:, self.pt_link] + rot(th, local[None])

    def sites(self, theta, origin):
        if self.site_link.size == 0:
            return np.zeros((theta.shape[0], 0, 2))
        th = theta[:, self.site_link]
        return origin[:, self.site_link] + rot(th, self.site_local[None])

    def jacobians(self, origin, P):
        """Point Jacobians (N, K, 2, ndof) for points P (N, K, 2)."""
        r = P[:, :, None, :] - origin[:, None, :, :]  # (N, K, L, 2)
        jr = perp(r) * self.pt_anc[None, :, :, None]
        jr = np.moveaxis(jr, 2, 3)  # (N, K, 2, L)
        if self.m.fixed_base:
            return jr[..., 1:]
        n, k = P.shape[:2]
        trans = np.zeros((n, k, 2, 2))
        trans[..., 0, 0] = 1.0
        trans[..., 1, 1] = 1.0
        return np.concatenate([trans, jr], axis=-1)

    def bias(self, theta_dot, origin, P):
        """Velocity-product accelerations of points P (N, K, 2)."""
        m = self.m
        n = origin.shape[0]
        B = np.zeros((n, m.n_links, 2))
        w2 = theta_dot**2
        for k in range(1, m.n_links):
            p = m.parent[k]
            B[:, k] = B[:, p] - w2[:, p, None] * (origin[:, k] - origin[:, p])
        lk = self.pt_link
        return B[:, lk] - w2[:, lk, None] * (P - origin[:, lk])

    # -------------------------------------------------------------- dynamics
    def mass_matrix(self, J_com, mass, inertia):
        M = np.einsum("nk,nkai,nkaj->nij", mass, J_com, J_com)
        M += np.einsum("nk,ki,kj->nij", inertia, self.Jw, self.Jw)
        return M

    def contact_forces(self, P_c, V_c, terrain, phys: PhysParams):
        cp = self.contact
        h, s = terrain.height(P_c[..., 0])
        inv = 1.0 / np.sqrt(1.0 + s * s)
        nrm = np.stack([-s * inv, inv], axis=-1)
        tan = np.stack([inv, s * inv], axis=-1)
        depth = (h - P_c[..., 1]) * inv
        touching = depth > 0.0
        vn = np.sum(V_c * nrm, axis=-1)
        vt = np.sum(V_c * tan, axis=-1)
        damp = np.where(vn < 0.0, cp.c_n, cp.c_n * (1.0 - phys.restitution[:, None]))
        fn = np.where(touching, np.maximum(0.0, cp.k_n * depth - damp * vn), 0.0)
        cap = phys.mu[:, None] * fn
        ft = -np.clip(cp.c_t * vt, -cap, cap)
        F = fn[..., None] * nrm + ft[..., None] * tan
        return F, touching, depth, vt

    def pd_torque(self, q, qd, target, phys: PhysParams):
        nr = self.m.n_root
        tau = phys.kp * (target - q[:, nr:]) - phys.kd * qd[:, nr:]
        lim = self.m.torque_limit
        return np.clip(tau, -lim, lim)

    def accel(self, q, qd, terrain, phys: PhysParams, target=None, dt=0.0, tau_fixed=None):
        """Generalized accelerations, applied torques and contact data.

        With a PD target the actuator term is integrated implicitly: the
        torque is evaluated at the end-of-step state q + dt*qd', qd' and the
        resulting linear term moves into the mass matrix. Joints whose torque
        saturates fall back to the clamped explicit value.
        """
        theta, origin = self.kinematics(q)
        P = self.points(theta, origin)
        J = self.jacobians(origin, P)
        theta_dot = qd @ self.Jw.T
        a_b = self.bias(theta_dot, origin, P)
        L = self.m.n_links
        nr = self.m.n_root
        J_com = J[:, :L]
        M = self.mass_matrix(J_com, phys.mass, phys.inertia)
        f_com = phys.mass[..., None] * (phys.gravity[:, None, :] - a_b[:, :L])
        Q = np.einsum("nkai,nka->ni", J_com, f_com)
        contact = None
        if P.shape[1] > L:
            J_c = J[:, L:]
            V_c = np.einsum("nkai,ni->nka", J_c, qd)
            F, touching, depth, vt = self.contact_forces(P[:, L:], V_c, terrain, phys)
            Q += np.einsum("nkai,nka->ni", J_c, F)
            contact = (touching, depth, vt, F)
        if tau_fixed is not None or self.m.n_joints == 0:
            tau = np.zeros((q.shape[0], self.m.n_joints)) if tau_fixed is None else np.broadcast_to(tau_fixed, (q.shape[0], self.m.n_joints))
            Q[:, nr:] += tau
            qdd = np.linalg.solve(M, Q[..., None])[..., 0]
            return qdd, tau, contact
        jq = q[:, nr:]
        jd = qd[:, nr:]
        lim = self.m.torque_limit
        gain = phys.kp * dt * dt + phys.kd * dt
        tau0 = phys.kp * (target - jq - dt * jd) - phys.kd * jd
        sat = np.abs(tau0) > lim
        idx = np.arange(nr, self.m.ndof)
        for _ in range(2):
            g = np.where(sat, 0.0, gain)
            Mi = M.copy()
            Mi[:, idx, idx] += g
            Qi = Q.copy()
            Qi[:, nr:] += np.where(sat, np.clip(tau0, -lim, lim), tau0)
            qdd = np.linalg.solve(Mi, Qi[..., None])[..., 0]
            tau = np.where(sat, np.clip(tau0, -lim, lim), tau0 - g * qdd[:, nr:])
            over = ~sat & (np.abs(tau) > lim)
            if not over.any():
                break
            sat = sat | over
            tau0 = np.where(over, np.sign(tau) * lim, tau0)
        tau = np.clip(tau, -lim, lim)
        return qdd, tau, contact

    def integrate(self, q, qd, target, terrain, phys: PhysParams, dt, n_sub, torque_override=None):
        """n_sub semi-implicit Euler steps; returns (q, qd, info)."""
        m = self.m
        nr = m.n_root
        n_c = m.contact_link.size
        n = q.shape[0]
        any_touch = np.zeros((n, n_c), dtype=bool)
        max_depth = np.zeros((n, n_c))
        slip = np.zeros(n)
        max_tau = np.zeros(n)
        tau = np.zeros((n, m.n_joints))
        for _ in range(n_sub):
            qdd, tau, contact = self.accel(q, qd, terrain, phys, target, dt, torque_override)
            qd = qd + dt * qdd
            q = q + dt * qd
            if m.n_joints:
                jq = q[:, nr:]
                low = jq < phys.lo
                high = jq > phys.hi
                if low.any() or high.any():
                    q[:, nr:] = np.clip(jq, phys.lo, phys.hi)
                    jd = qd[:, nr:]
                    qd[:, nr:] = np.where((low & (jd < 0.0)) | (high & (jd > 0.0)), 0.0, jd)
            if contact is not None:
                touching, depth, vt, _ = contact
                any_touch |= touching
                np.maximum(max_depth, depth, out=max_depth)
                foot = touching & m.contact_is_foot[None]
                slip = np.maximum(slip, np.sum(np.where(foot, vt * vt, 0.0), axis=1))
            if tau.size:
                max_tau = np.maximum(max_tau, np.max(np.abs(tau), axis=1))
        finite = np.all(np.isfinite(q), axis=1) & np.all(np.isfinite(qd), axis=1)
        info = {"contacts": any_touch, "depth": max_depth, "slip": slip, "torque": tau, "max_abs_torque": max_tau, "finite": finite}
        return q, qd, info

    def energy(self, q, qd, phys: PhysParams):
        theta, origin = self.kinematics(q)
        P = self.points(theta, origin)
        J = self.jacobians(origin, P)
        L = self.m.n_links
        M = self.mass_matrix(J[:, :L], phys.mass, phys.inertia)
        kin = 0.5 * np.einsum("ni,nij,nj->n", qd, M, qd)
        pot = -np.einsum("nk,nka,na->n", phys.mass, P[:, :L], phys.gravity)
        return kin + pot
