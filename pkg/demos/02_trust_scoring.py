"""Two-layer trust scoring of a server that gets flooded mid-run.

Synthesized detection reports and user evaluations feed the two layers;
the printed trace shows the reputation collapsing during the attack
window and recovering afterwards at the configured update rate.
"""

import numpy as np

from twinmig.trust import (
    DefenseHistory,
    InteractionLog,
    TrustParams,
    combine_and_update,
    interaction_layer_reputation,
    network_layer_reputation,
    synthesize_detection_report,
)


def main() -> None:
    params = TrustParams()
    rng = np.random.default_rng(7)
    history = DefenseHistory(successful_defenses=9, total_attacks=12)
    log = InteractionLog()
    rep = 0.5

    print("slot  attack  P_data  P_ser   rep_net rep_int rep")
    for slot in range(30):
        under_attack = 10 <= slot < 18
        abnormal = 0.02 + (0.6 if under_attack else 0.0)
        failure = 0.02 + (0.7 if under_attack else 0.0)
        report = synthesize_detection_report(abnormal, failure, rng)
        # three users rate the slot; floods force negative reviews
        for user in (1, 2, 3):
            log.record(user, positive=not under_attack)
        rep_net = network_layer_reputation(report, history, params)
        rep_int = interaction_layer_reputation(log)
        record = combine_and_update(rep_net, rep_int, rep, params)
        rep = record.rep_current
        flag = "  *   " if under_attack else "      "
        print(
            f"{slot:4d} {flag} {1 - report.abnormal_data / report.total_data:6.3f}"
            f"  {report.successful_responses / report.total_requests:6.3f}"
            f"  {rep_net:6.3f}  {rep_int:6.3f}  {rep:6.3f}"
        )

    print("\nthe beta-posterior interaction layer forgives slowly;")
    print("the network layer reacts instantly to detection statistics.")


if __name__ == "__main__":
    main()
