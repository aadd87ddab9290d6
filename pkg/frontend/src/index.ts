export * from "./protocol.js";
export * from "./board.js";
export * from "./client.js";
export { connect } from "./ws.js";
