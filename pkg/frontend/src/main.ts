import { TuningApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const params = new URLSearchParams(window.location.search);
const checkpoint = params.get("checkpoint") ?? "tuned.lxck";
const image = params.get("image") ?? "input.lxrw";

const app = new TuningApp(root, "");
app.start(checkpoint, image).catch((err) => {
  root.textContent = `failed to start session: ${err.message ?? err}`;
});
