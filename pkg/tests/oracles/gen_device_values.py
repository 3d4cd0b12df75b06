"""Hand-transcribed device equations, used once to freeze test values.

Deliberately does NOT import gridpei: every term below is written out from
the controller block diagrams with explicit scalar arithmetic so the frozen
numbers in tests/test_devices.py are an independent check on the package.

Run:  python3 tests/oracles/gen_device_values.py
"""

import math

w0 = 2.0 * math.pi * 50.0

# --- grid-forming, benchmark constants ---------------------------------------
r_f, L_f, C_f = 0.1, 1.35e-3, 50e-6
w_c = 31.41
m_p, n_q = 9.4e-5, 1.3e-3
V0 = 380.0 * math.sqrt(2.0) / math.sqrt(3.0)
w_s = w0
K_pv, K_iv, F = 0.05, 390.0, 0.75
K_pc, K_ic = 10.5, 16000.0

# pinned, deliberately asymmetric state
delta, P, Q = 0.12, 800.0, -300.0
phi_d, phi_q = 0.004, -0.002
gam_d, gam_q = 1.2, -0.4
i_ld, i_lq = 12.0, -3.0
v_od, v_oq = 305.0, 4.0
i_od, i_oq = -11.0, 2.5

p_inst = -1.5 * (v_od * i_od + v_oq * i_oq)
q_inst = -1.5 * (v_oq * i_od - v_od * i_oq)
dP = w_c * (p_inst - P)
dQ = w_c * (q_inst - Q)
w_n = w_s - m_p * P
ddelta = w_n - w0
v_od_ref = V0 - n_q * Q
dphi_d = v_od_ref - v_od
dphi_q = 0.0 - v_oq
ild_ref = K_pv * (v_od_ref - v_od) - F * i_od - w0 * C_f * v_oq + K_iv * phi_d
ilq_ref = K_pv * (0.0 - v_oq) - F * i_oq + w0 * C_f * v_od + K_iv * phi_q
dgam_d = -i_ld + ild_ref
dgam_q = -i_lq + ilq_ref
v_id = K_pc * (ild_ref - i_ld) - w0 * L_f * i_lq + K_ic * gam_d
v_iq = K_pc * (ilq_ref - i_lq) + w0 * L_f * i_ld + K_ic * gam_q
dild = (-r_f * i_ld + L_f * w0 * i_lq + v_id - v_od) / L_f
dilq = (-r_f * i_lq - L_f * w0 * i_ld + v_iq - v_oq) / L_f
dvod = w0 * v_oq + (i_ld + i_od) / C_f
dvoq = -w0 * v_od + (i_lq + i_oq) / C_f

print("# grid-forming point values")
print("GFM_PQ =", (repr(p_inst), repr(q_inst)))
print("GFM_DERIV =", tuple(repr(x) for x in
      (ddelta, dP, dQ, dphi_d, dphi_q, dgam_d, dgam_q, dild, dilq, dvod, dvoq)))

# --- grid-following ----------------------------------------------------------
K_pp, K_ip = 0.37, 2.14
P_star, Q_star = 2500.0, -400.0

eta = 0.8
gam_d, gam_q = 0.5, -0.1
i_ld, i_lq = 6.0, 1.0
v_od, v_oq = 308.0, -2.0
i_od, i_oq = -5.5, 0.9

deta = K_ip * v_oq
dtheta = eta + K_pp * v_oq + w0
# production-positive set points: exporting P_star needs i_ld = +2P/(3v)
ild_ref = (2.0 / 3.0) * P_star / v_od
ilq_ref = -(2.0 / 3.0) * Q_star / v_od
dgam_d = -i_ld + ild_ref
dgam_q = -i_lq + ilq_ref
v_id = K_pc * (ild_ref - i_ld) - w0 * L_f * i_lq + K_ic * gam_d
v_iq = K_pc * (ilq_ref - i_lq) + w0 * L_f * i_ld + K_ic * gam_q
dild = (-r_f * i_ld + L_f * w0 * i_lq + v_id - v_od) / L_f
dilq = (-r_f * i_lq - L_f * w0 * i_ld + v_iq - v_oq) / L_f
dvod = w0 * v_oq + (i_ld + i_od) / C_f
dvoq = -w0 * v_od + (i_lq + i_oq) / C_f

print("# grid-following point values")
print("GFL_DERIV =", tuple(repr(x) for x in
      (deta, dtheta, dgam_d, dgam_q, dild, dilq, dvod, dvoq)))

# --- spot checks on Jacobian entries, worked by hand -------------------------
# d(di_ld)/d(v_od) = (K_pc * d ild_ref/d v_od - 1)/L_f with
# d ild_ref/d v_od = -K_pv for the grid-forming loop.
print("# hand Jacobian entries")
print("GFM_A_ild_vod =", repr((-K_pc * K_pv - 1.0) / L_f))
print("GFM_A_ild_ild =", repr(-(r_f + K_pc) / L_f))
print("GFM_A_gamd_voq =", repr(-w0 * C_f))
sd = -(2.0 / 3.0) * P_star / v_od**2
sq = (2.0 / 3.0) * Q_star / v_od**2
print("GFL_SLOPES =", (repr(sd), repr(sq)))
print("GFL_A_ild_vod =", repr((K_pc * sd - 1.0) / L_f))
