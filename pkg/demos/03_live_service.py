"""
The live classification service, end to end in one process
==========================================================

The server speaks a small JSON-over-WebSocket protocol: hello/ready to
negotiate the joint schema, then start / frame* / stop per gesture, and
a prediction message back with per-stream and tuner probabilities plus
a latency breakdown. A recorded session can be saved to a replay file
and fed back later -- replays are protocol transcripts, so the online
prediction is bit-for-bit the offline one.

Run:  python3 demos/03_live_service.py [checkpoint.ckpt]
Without a checkpoint an untrained model serves; the wire mechanics and
latency numbers are real, the probabilities are noise. Train one with
demos/02_train_swipes.py for meaningful classes.
"""

import asyncio
import json
import sys
import tempfile
from pathlib import Path

from gestigo import (GestureNet, GestureService, open_server,
                     read_replay_file, swipe_subset_config,
                     synthetic_sequence, write_replay_file)
from gestigo.service import replay

# A model to serve: either the checkpoint given on the command line or
# a small untrained stand-in with the same three streams.
if len(sys.argv) > 1:
    net = GestureNet.load(sys.argv[1])
    print(f"serving checkpoint {sys.argv[1]}")
else:
    net = GestureNet(swipe_subset_config(stage_sizes=(160,), pseudo_px=16))
    print("serving an untrained model (pass a .ckpt path for real output)")

# Record a gesture to a replay file. Label 10 = "Swipe Left"; the file
# holds the negotiated schema plus timestamped frames, nothing else.
replay_path = Path(tempfile.mkdtemp()) / "swipe_left.json"
write_replay_file(synthetic_sequence("DHG1428_14G", label=10, seed=5),
                  replay_path, fps=30)
doc = read_replay_file(replay_path)
print(f"recorded {len(doc['frames'])} frames to {replay_path.name}")


async def main():
    service = GestureService(model=net)
    try:
        # Port 0 = pick a free one. In production:
        #   python3 -m gestigo.cli serve --model swipes.ckpt --bind :8765
        async with open_server(service) as server:
            port = server.sockets[0].getsockname()[1]
            uri = f"ws://127.0.0.1:{port}"
            print(f"server up at {uri}")

            # fps=30 paces frames like a live capture; fps=0 would blast
            # them through as fast as the socket allows.
            msg = await replay(uri, doc, fps=30)
            return msg
    finally:
        service.close()


msg = asyncio.run(main())

print(f"\npredicted class {msg['class']} ({msg['label']}) "
      f"for a {msg['duration_ms']:.0f} ms gesture")
for name, probs in zip(net.config.vo_names, msg["streams"]):
    top = max(range(len(probs)), key=probs.__getitem__)
    print(f"  stream {name:<12} argmax {top + 1}  p={probs[top]:.3f}")
lat = msg["latency_ms"]
print(f"latency: condense {lat['condense']:.0f} ms + infer {lat['infer']:.0f} ms "
      f"= {lat['total']:.0f} ms total")

# The raw wire transcript of the same session, for the curious:
print("\nwire messages a client sends:",
      json.dumps({"type": "start"}), "...frames...", json.dumps({"type": "stop"}))
