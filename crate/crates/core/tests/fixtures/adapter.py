"""Test adapter speaking the JSON-lines model protocol.

usage: adapter.py MODE [D] [N]

modes:
  echo          y = x[0]
  invalid-json  answers every query with a line that is not JSON
  sleepy        never answers queries
  crash-after   echo for N queries, then exits with status 3
  no-hello      exits before the handshake
"""

import json
import sys
import time


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    mode = sys.argv[1]
    d = int(sys.argv[2]) if len(sys.argv) > 2 else 3
    limit = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    if mode == "no-hello":
        sys.exit(4)
    answered = 0
    for line in sys.stdin:
        try:
            msg = json.loads(line)
        except ValueError:
            reply({"error": "malformed request"})
            continue
        if not isinstance(msg, dict):
            reply({"error": "request must be an object"})
            continue
        op = msg.get("op")
        if op == "hello":
            reply({"op": "hello", "d": d, "name": "fixture-" + mode})
            continue
        if op == "bye":
            return
        rid = msg.get("id")
        x = msg.get("x")
        if not isinstance(x, list) or len(x) != d:
            reply({"id": rid, "error": "x must be a list of %d numbers" % d})
            continue
        if mode == "invalid-json":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
        elif mode == "sleepy":
            time.sleep(3600)
        elif mode == "crash-after" and answered >= limit:
            sys.exit(3)
        else:
            reply({"id": rid, "y": float(x[0])})
        answered += 1


if __name__ == "__main__":
    main()
