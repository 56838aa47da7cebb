"""TCP server answering EPSN requests one at a time per connection.

Each connection gets its own thread; the model forward pass is serialized
behind one lock so a single checkpoint can back many connections.  The
server keeps no state between requests beyond the loaded model.

Error handling follows the frame contract: a malformed frame gets an
error response (echoing the request id when it was parsed) and the
connection is closed, since the stream position can no longer be
trusted; a well-framed request the predictor cannot serve gets an error
response and the connection stays open.
"""

import socket
import threading

from . import protocol
from .model import PredictError


def _graceful_close(conn: socket.socket) -> None:
    """Send FIN and drain leftover peer bytes so the error response is not
    torn down by a reset before the client reads it."""
    try:
        conn.shutdown(socket.SHUT_WR)
        conn.settimeout(1.0)
        while conn.recv(65536):
            pass
    except OSError:
        pass


class BridgeServer:
    def __init__(self, predictor, host: str = "127.0.0.1", port: int = 0):
        self._predictor = predictor
        self._inference_lock = threading.Lock()
        self._listener = socket.create_server((host, port))
        self._closed = False
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> str:
        host, port = self._listener.getsockname()[:2]
        return f"{host}:{port}"

    def serve_forever(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                break  # listener closed
            worker = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            worker.start()
            self._threads.append(worker)

    def start(self) -> threading.Thread:
        """Run the accept loop in a background thread (used by tests)."""
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread

    def close(self) -> None:
        self._closed = True
        try:
            self._listener.close()
        except OSError:
            pass

    def _serve_connection(self, conn: socket.socket) -> None:
        reader = protocol.Reader(conn)
        try:
            while True:
                try:
                    request_id, t, tensor = protocol.read_request(reader)
                except protocol.ConnectionClosed:
                    return
                except protocol.FrameError as exc:
                    conn.sendall(protocol.encode_error(exc.request_id, str(exc)))
                    _graceful_close(conn)
                    return
                try:
                    with self._inference_lock:
                        result = self._predictor(tensor, t)
                except PredictError as exc:
                    conn.sendall(protocol.encode_error(request_id, str(exc)))
                    continue
                conn.sendall(protocol.encode_ok(request_id, result))
        except OSError:
            pass  # peer vanished mid-write
        finally:
            conn.close()
