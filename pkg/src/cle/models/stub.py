"""Reference peer for the external-model wire protocol.

Run as ``python -m cle.models.stub`` to serve stdin/stdout, or with
``--http PORT`` to serve HTTP POSTs.  ``--mode`` injects faults:

* ``ok``       every instance receives ``--probs``
* ``badsum``   probabilities scaled to sum to 0.9
* ``reorder``  answers each request with the id of the previous one
* ``garbage``  replies with a line that is not JSON
* ``exit``     exits without answering
"""
import argparse
import json
import sys
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class StubPeer:
    def __init__(self, probs=(0.3, 0.7), mode="ok", sleep=0.0):
        self.probs = list(probs)
        self.mode = mode
        self.sleep = sleep
        self.last_id = 0

    def respond(self, line):
        req = json.loads(line)
        if self.sleep:
            time.sleep(self.sleep * len(req["instances"]))
        row = self.probs
        if self.mode == "badsum":
            row = [p * 0.9 for p in row]
        resp_id = req["id"]
        if self.mode == "reorder":
            resp_id, self.last_id = self.last_id, req["id"]
        if self.mode == "garbage":
            return "this is not json\n"
        return json.dumps({"id": resp_id, "probs": [row] * len(req["instances"])}) + "\n"


def serve_lines(peer, stdin=sys.stdin, stdout=sys.stdout):
    for line in stdin:
        if not line.strip():
            continue
        if peer.mode == "exit":
            return
        stdout.write(peer.respond(line))
        stdout.flush()


def make_http_server(peer, host="127.0.0.1", port=0):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0))).decode("utf-8")
            out = peer.respond(body).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--probs", default="0.3,0.7")
    ap.add_argument("--mode", default="ok", choices=["ok", "badsum", "reorder", "garbage", "exit"])
    ap.add_argument("--sleep", type=float, default=0.0, help="seconds per instance")
    ap.add_argument("--http", type=int, default=None, metavar="PORT")
    args = ap.parse_args(argv)
    peer = StubPeer([float(p) for p in args.probs.split(",")], args.mode, args.sleep)
    if args.http is not None:
        make_http_server(peer, port=args.http).serve_forever()
    else:
        serve_lines(peer)


if __name__ == "__main__":
    main()
