#!/usr/bin/env python3
"""Writes data/ieee37.feeder from the IEEE 37-node test feeder tables.

Node ids are sequential: 1 = 799 (substation), then the remaining IEEE bus
names in ascending order. Delta spot loads are mapped to a wye phase
(ab -> a, bc -> b, ca -> c) and modelled as constant PQ. The in-line
transformer XFM-1 (709-775) becomes a series impedance referred to 4.8 kV.
"""
import argparse
import math

FT_PER_MILE = 5280.0

# Ohm/mile, upper triangle (aa, ab, ac, bb, bc, cc)
CONFIGS = {
    721: [(0.2926, 0.1973), (0.0673, -0.0368), (0.0337, -0.0417),
          (0.2646, 0.1900), (0.0673, -0.0368), (0.2926, 0.1973)],
    722: [(0.4751, 0.2973), (0.1629, -0.0326), (0.1234, -0.0607),
          (0.4488, 0.2678), (0.1629, -0.0326), (0.4751, 0.2973)],
    723: [(1.2936, 0.6713), (0.4871, 0.2111), (0.4585, 0.1521),
          (1.3022, 0.6326), (0.4871, 0.2111), (1.2936, 0.6713)],
    724: [(2.0952, 0.7758), (0.5204, 0.2738), (0.4926, 0.2123),
          (2.1068, 0.7398), (0.5204, 0.2738), (2.0952, 0.7758)],
}

SEGMENTS = [
    (799, 701, 1850, 721), (701, 702, 960, 722), (702, 705, 400, 724),
    (702, 713, 360, 723), (702, 703, 1320, 722), (703, 727, 240, 724),
    (703, 730, 600, 723), (704, 714, 80, 724), (704, 720, 800, 723),
    (705, 742, 320, 724), (705, 712, 240, 724), (706, 725, 280, 724),
    (707, 724, 760, 724), (707, 722, 120, 724), (708, 733, 320, 723),
    (708, 732, 320, 724), (709, 731, 600, 723), (709, 708, 320, 723),
    (710, 735, 200, 724), (710, 736, 1280, 724), (711, 741, 400, 723),
    (711, 740, 200, 724), (713, 704, 520, 723), (714, 718, 520, 724),
    (720, 707, 920, 724), (720, 706, 600, 723), (727, 744, 280, 723),
    (730, 709, 200, 723), (733, 734, 560, 723), (734, 737, 640, 723),
    (734, 710, 520, 724), (737, 738, 400, 723), (738, 711, 400, 723),
    (744, 728, 200, 724), (744, 729, 280, 724),
]

# kW, kvar for delta phases ab, bc, ca
LOADS = {
    701: [(140, 70), (140, 70), (350, 175)], 712: [(0, 0), (0, 0), (85, 40)],
    713: [(0, 0), (0, 0), (85, 40)], 714: [(17, 8), (21, 10), (0, 0)],
    718: [(85, 40), (0, 0), (0, 0)], 720: [(0, 0), (0, 0), (85, 40)],
    722: [(0, 0), (140, 70), (21, 10)], 724: [(0, 0), (42, 21), (0, 0)],
    725: [(0, 0), (42, 21), (0, 0)], 727: [(0, 0), (0, 0), (42, 21)],
    728: [(42, 21), (42, 21), (42, 21)], 729: [(42, 21), (0, 0), (0, 0)],
    730: [(0, 0), (0, 0), (85, 40)], 731: [(0, 0), (85, 40), (0, 0)],
    732: [(0, 0), (0, 0), (42, 21)], 733: [(85, 40), (0, 0), (0, 0)],
    734: [(0, 0), (0, 0), (42, 21)], 735: [(0, 0), (0, 0), (85, 40)],
    736: [(0, 0), (42, 21), (0, 0)], 737: [(140, 70), (0, 0), (0, 0)],
    738: [(126, 62), (0, 0), (0, 0)], 740: [(0, 0), (0, 0), (85, 40)],
    741: [(0, 0), (0, 0), (42, 21)], 742: [(8, 4), (85, 40), (0, 0)],
    744: [(42, 21), (0, 0), (0, 0)],
}

V_LL = 4800.0
S_BASE = 1.0e6
XFM_KVA, XFM_R, XFM_X = 500.0, 0.0009, 0.0181


def cplx(re, im):
    return f"{re:.9g}{im:+.9g}j"


def main(path, source_pu, load_scale):
    buses = sorted({b for s in SEGMENTS for b in s[:2]} | {775})
    buses.remove(799)
    ids = {799: 1}
    for k, b in enumerate(buses):
        ids[b] = k + 2
    v_ln = V_LL / math.sqrt(3.0)
    out = []
    out.append("# IEEE 37-node test feeder, wye-equivalent radial dataset.")
    out.append("# Segment impedances: published configurations 721-724 (ohm/mile) x length.")
    out.append("# Spot loads: published delta loads mapped ab->a, bc->b, ca->c, constant PQ,")
    out.append(f"# scaled by {load_scale:g}.")
    out.append("# Transformer XFM-1 (709-775): series impedance referred to 4.8 kV, no taps.")
    out.append(f"# Substation (799) held at {source_pu:g} p.u.; regulator 799-701 omitted.")
    out.append("# Node map: " + ", ".join(f"{ids[b]}={b}" for b in [799] + buses))
    out.append("[FEEDER]")
    out.append("name ieee37")
    out.append(f"base_power_va {S_BASE:.0f}")
    out.append(f"base_voltage_v {V_LL:.0f}")
    out.append("source 1")
    out.append("[NODES]")
    out.append("# id phases v_mag_volts angle_deg")
    for b in [799] + buses:
        mag = v_ln * (source_pu if b == 799 else 1.0)
        out.append(f"{ids[b]} abc {mag:.6f} 0  # {b}")
    out.append("[LINES]")
    out.append("# from to zaa zab zac zba zbb zbc zca zcb zcc (ohm)")
    for a, b, ft, cfg in SEGMENTS:
        miles = ft / FT_PER_MILE
        aa, ab, ac, bb, bc, cc = [(r * miles, x * miles) for r, x in CONFIGS[cfg]]
        full = [aa, ab, ac, ab, bb, bc, ac, bc, cc]
        out.append(f"{ids[a]} {ids[b]} " + " ".join(cplx(*z) for z in full) + f"  # {a}-{b} {ft}ft {cfg}")
    zb = V_LL ** 2 / (XFM_KVA * 1e3)
    zt = (XFM_R * zb, XFM_X * zb)
    zero = (0.0, 0.0)
    full = [zt, zero, zero, zero, zt, zero, zero, zero, zt]
    out.append(f"{ids[709]} {ids[775]} " + " ".join(cplx(*z) for z in full) + "  # 709-775 XFM-1")
    out.append("[LOADS]")
    out.append("# node phase complex_power_va")
    for b in sorted(LOADS):
        for ph, (p, q) in zip("abc", LOADS[b]):
            if p or q:
                out.append(f"{ids[b]} {ph} {cplx(p * 1e3 * load_scale, q * 1e3 * load_scale)}  # {b}")
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description="Write the bundled IEEE 37-node dataset.")
    ap.add_argument("path", nargs="?", default="data/ieee37.feeder")
    ap.add_argument("--source-pu", type=float, default=1.0)
    ap.add_argument("--load-scale", type=float, default=0.5)
    args = ap.parse_args()
    main(args.path, args.source_pu, args.load_scale)
