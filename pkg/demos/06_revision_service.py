"""The revision service end to end, in process: create a session, click twice,
undo once, inspect the snapshot.  Uses the in-process test client; to serve
over a real port instead, run

    clickrev serve --checkpoint <file> --port 8008

Run:  python demos/06_revision_service.py
"""

import numpy as np
from fastapi.testclient import TestClient

from clickrev import NetworkConfig, RevisionUNet, degrade_mask, mask_to_rle
from clickrev.data import synth_slice
from clickrev.service import create_app

# A session-sized toy model (64x64 so the demo is instant).
net = NetworkConfig(input_size=64, depth=6, base_features=8, max_features=16)
app = create_app(model=RevisionUNet(net, seed=5), checkpoint_id="demo@0")

rng = np.random.default_rng(4)
image, gt, organ = synth_slice(rng, (64, 64))
initial = degrade_mask(gt, rng)

with TestClient(app) as client:
    print("healthz:", client.get("/healthz").json())

    created = client.post(
        "/sessions",
        json={
            "v": 1,
            "image": [[float(x) for x in row] for row in image],
            "initial_mask": mask_to_rle(initial),
            "display": {"level": 40, "width": 400},
        },
    ).json()
    sid = created["session_id"]
    print(f"\nsession {sid[:8]}…  initial contours: {len(created['contours'])} polygon(s)")

    for row, col in ((20, 22), (42, 40)):
        body = client.post(
            f"/sessions/{sid}/clicks", json={"v": 1, "click": {"row": row, "col": col}}
        ).json()
        print(
            f"click {body['clicks'][-1]['ordinal']} at ({row}, {col}): "
            f"model {body['latency_ms']['model']:.1f} ms, "
            f"total {body['latency_ms']['total']:.1f} ms, "
            f"{len(body['contours'])} polygon(s)"
        )

    undone = client.post(f"/sessions/{sid}/undo", json={"v": 1}).json()
    print(f"undo: back to {len(undone['clicks'])} click(s)")

    snapshot = client.get(f"/sessions/{sid}").json()
    print(
        f"snapshot: {len(snapshot['clicks'])} click(s), "
        f"history length {snapshot['history_length']}, "
        f"empty_mask={snapshot['empty_mask']}"
    )
