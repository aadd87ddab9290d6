/** WebSocket transport for the arena service (browser runtime). */

import { Transport } from "./client.js";

export function connect(base: string): Promise<Transport> {
  const socket = new WebSocket(base.replace(/^http/, "ws") + "/ws");
  let handler: (raw: unknown) => void = () => {};
  socket.onmessage = (ev) => handler(JSON.parse(ev.data as string));
  const transport: Transport = {
    send: (frame) => socket.send(JSON.stringify(frame)),
    onFrame: (h) => {
      handler = h;
    },
  };
  return new Promise((resolve, reject) => {
    socket.onopen = () => resolve(transport);
    socket.onerror = () => reject(new Error("connection failed"));
  });
}
