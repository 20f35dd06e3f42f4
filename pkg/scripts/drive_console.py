"""Scripted console-loop drive over a real socket: commands, acks, malformed frames."""
import asyncio
import json
import subprocess
import sys
import time

import httpx
import websockets


async def drive(port):
    uri = f"ws://127.0.0.1:{port}/ws"
    async with websockets.connect(uri) as ws:
        hello = json.loads(await ws.recv())
        assert hello["type"] == "hello" and hello["scenario"] == "trap", hello
        agent = hello["agents"][0]["name"]

        async def until(kind, ident=None):
            while True:
                frame = json.loads(await ws.recv())
                if frame["type"] == kind and (ident is None or frame.get("id") == ident):
                    return frame

        await ws.send(json.dumps({"type": "command", "action": "set-enabled", "agent": agent, "enabled": False, "id": 1}))
        ack = await until("ack", 1)
        assert ack["action"] == "set-enabled" and ack["effective_tick"] > 0, ack

        await ws.send(json.dumps({"type": "command", "action": "set-rate", "agent": agent, "rate": 4, "id": 2}))
        ack = await until("ack", 2)
        await ws.send(json.dumps({"type": "command", "action": "set-delta", "agent": agent, "d_pos": 0.02, "id": 3}))
        ack = await until("ack", 3)
        await ws.send(json.dumps({"type": "command", "action": "operator-input", "dy": 0.05, "id": 4}))
        ack = await until("ack", 4)
        assert "effective_tick" in ack, ack

        await ws.send("{not json")
        err = await until("error")
        assert "JSON" in err["message"], err
        await ws.send(json.dumps({"type": "command", "action": "set-rate", "agent": agent, "rate": -3, "id": 5}))
        err = await until("error", 5)

        snap_a = await until("snapshot")
        snap_b = await until("snapshot")
        assert snap_b["tick"] > snap_a["tick"], (snap_a["tick"], snap_b["tick"])
        roster = {a["name"]: a for a in snap_b["agents"]}
        assert roster[agent]["enabled"] is False and roster[agent]["rate"] == 4, roster[agent]
        return snap_b["tick"]


def main():
    port = 8731
    proc = subprocess.Popen(
        ["manisim", "serve", "trap", "--port", str(port), "--tick-rate", "200"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    try:
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                httpx.get(f"http://127.0.0.1:{port}/metrics.json", timeout=1.0)
                break
            except Exception:
                time.sleep(0.2)
        tick = asyncio.run(drive(port))
        body = httpx.get(f"http://127.0.0.1:{port}/ticklog", timeout=5.0).text
        header, *rows = body.strip().split("\n")
        assert header.startswith("tick,time,trunk_x"), header
        assert len(rows) >= tick, (len(rows), tick)
        metrics = httpx.get(f"http://127.0.0.1:{port}/metrics.json", timeout=5.0).json()
        assert metrics["scenario"] == "trap" and not metrics["failed"], metrics
        print(f"console drive OK: commands acked, errors isolated, {len(rows)} log rows at tick {tick}")
    finally:
        proc.terminate()
        proc.wait(timeout=10)


if __name__ == "__main__":
    sys.exit(main())
