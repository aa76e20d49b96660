"""Walk through the migration latency pipeline on a hand-checkable case.

A twin task is uploaded to a serving server, a 20% share is shipped to a
pre-migration server over the wired backbone, both process in parallel,
and both result shares are downloaded. Every intermediate delay is shown.
"""

from twinmig.channel import ChannelConstants, Rates, channel_gain, distance, link_rate, migration_latency
from twinmig.world import EdgeServer, Position, TaskSpec


def server(idx: int, load: float, cap: float) -> EdgeServer:
    return EdgeServer(
        id=idx, kind="rsu", position=Position(idx * 120.0, 40.0, 10.0),
        compute_capability=cap, max_load=1e12, comm_range=1e9,
        uplink_bandwidth=20e6, downlink_bandwidth=20e6,
        inter_server_bandwidth={1: 10.0, 2: 10.0},
        gain_los=4.0, gain_nlos=0.0, noise_power=1e-13, base_load=0.0,
        current_load=load,
    )


def main() -> None:
    vehicle_pos = Position(60.0, 0.0, 0.0)
    consts = ChannelConstants(carrier_frequency=2.4e9)
    s = server(1, load=50.0, cap=10.0)
    sp = server(2, load=0.0, cap=10.0)

    d = distance(vehicle_pos, s.position)
    g = channel_gain(s, d, consts)
    rate = link_rate(s.uplink_bandwidth, 0.5, g, s.noise_power)
    print(f"distance to serving server: {d:8.1f} m")
    print(f"path-loss gain:             {g:8.3e}")
    print(f"achievable uplink rate:     {rate/1e6:8.1f} Mbit/s")
    print()

    # hand-checkable unit case: 100-bit task, 20% share shipped
    task = TaskSpec(upload_size=100.0, process_size=100.0)
    rates = Rates(uplink=50.0, downlink_current=40.0, downlink_pre=40.0)
    out = migration_latency(task, 0.2, s, sp, rates, cycles_per_bit=1.0)
    print("hand-checkable breakdown (100-bit task, 20% pre-migrated):")
    for name in ("uplink", "migration", "queue_current", "queue_pre",
                 "process_current", "process_pre", "process_max", "downlink", "total"):
        print(f"  {name:16s} {getattr(out, name):6.2f} s")

    print()
    print("share sweep on the same pair (parallel processing pays off):")
    for k in (0.0, 0.25, 0.5, 0.75, 1.0):
        print(f"  k = {k:4.2f} -> total {migration_latency(task, k, s, sp, rates, 1.0).total:6.2f} s")


if __name__ == "__main__":
    main()
