/** Console entry point: socket -> state -> mailbox -> rAF render loop,
 * controls -> command manager -> socket. */

import { CommandManager } from "./commands.js";
import { isCarriedForward, renderDensityGrid, renderTrace } from "./render.js";
import { ConsoleSocket } from "./socket.js";
import { ConsoleState } from "./state.js";
import { CommandName } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function canvasCtx(id: string): CanvasRenderingContext2D {
  const ctx = el<HTMLCanvasElement>(id).getContext("2d");
  if (!ctx) throw new Error(`no 2d context for #${id}`);
  return ctx;
}

function wsUrl(): string {
  const params = new URLSearchParams(location.search);
  const override = params.get("ws");
  if (override) return override;
  const host = location.hostname || "localhost";
  return `ws://${host}:8765`;
}

function showToast(message: string): void {
  const container = el<HTMLDivElement>("toasts");
  const toast = document.createElement("div");
  toast.className = "toast";
  toast.textContent = message;
  container.appendChild(toast);
  setTimeout(() => toast.remove(), 4000);
}

function main(): void {
  const reCtx = canvasCtx("rho-re");
  const imCtx = canvasCtx("rho-im");
  const fidelityCtx = canvasCtx("trace-fidelity");
  const purityCtx = canvasCtx("trace-purity");
  const concurrenceCtx = canvasCtx("trace-concurrence");

  const thetaSlider = el<HTMLInputElement>("theta");
  const thetaReadout = el<HTMLSpanElement>("theta-readout");
  const carInput = el<HTMLInputElement>("car");
  const rateInput = el<HTMLInputElement>("rate");
  const windowSelect = el<HTMLSelectElement>("window");
  const targetSelect = el<HTMLSelectElement>("target");
  const pauseButton = el<HTMLButtonElement>("pause");
  const resumeButton = el<HTMLButtonElement>("resume");
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLSpanElement>("status");
  const hud = el<HTMLSpanElement>("hud");

  const commands = new CommandManager(
    (command) => {
      socket.send(JSON.stringify(command));
    },
    (snap) => {
      // error/timeout: snap the control back to its confirmed value
      if (snap.cmd === "set_theta" && typeof snap.value === "number") {
        thetaSlider.value = String((snap.value * 180) / Math.PI);
      } else if (snap.cmd === "set_car" && typeof snap.value === "number") {
        carInput.value = String(snap.value);
      } else if (snap.cmd === "set_rate" && typeof snap.value === "number") {
        rateInput.value = String(snap.value);
      } else if (snap.cmd === "set_window" && typeof snap.value === "number") {
        windowSelect.value = String(snap.value);
      }
    },
    showToast,
  );

  const state = new ConsoleState((ack) => commands.handleAck(ack));
  const socket = new ConsoleSocket(wsUrl(), {
    onMessage: (text) => {
      state.handleMessage(text);
      if (state.hello) syncFromHello();
    },
    onStatus: (s) => state.setConnection(s),
  });

  let helloSynced = false;
  function syncFromHello(): void {
    if (helloSynced || !state.hello) return;
    helloSynced = true;
    const config = state.hello.config;
    thetaSlider.value = String((config.source.theta * 180) / Math.PI);
    carInput.value = String(config.source.car);
    rateInput.value = String(config.source.rate);
    windowSelect.value = String(config.window_m);
    commands.confirm("set_theta", config.source.theta);
    commands.confirm("set_car", config.source.car);
    commands.confirm("set_rate", config.source.rate);
    commands.confirm("set_window", config.window_m);
    for (const name of state.hello.targets) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      targetSelect.appendChild(option);
    }
  }

  const send = (cmd: CommandName, value: number | string | null) =>
    commands.setControl(cmd, value, performance.now());

  thetaSlider.addEventListener("input", () => {
    const deg = Number(thetaSlider.value);
    thetaReadout.textContent = `${deg.toFixed(1)} deg`;
    send("set_theta", (deg * Math.PI) / 180);
  });
  carInput.addEventListener("change", () => send("set_car", Number(carInput.value)));
  rateInput.addEventListener("change", () => send("set_rate", Number(rateInput.value)));
  windowSelect.addEventListener("change", () => send("set_window", Number(windowSelect.value)));
  targetSelect.addEventListener("change", () => send("set_target", targetSelect.value));
  pauseButton.addEventListener("click", () => send("pause", null));
  resumeButton.addEventListener("click", () => send("resume", null));

  let renderedFrames = 0;
  let fpsWindowStart = performance.now();
  let fps = 0;

  function tick(): void {
    const now = performance.now();
    commands.tick(now);

    const frame = state.takeForRender();
    if (frame) {
      renderDensityGrid(reCtx, frame, "re");
      renderDensityGrid(imCtx, frame, "im");
      el<HTMLSpanElement>("seq").textContent = String(frame.seq);
      el<HTMLSpanElement>("window-m").textContent = String(frame.window_m);
      el<HTMLSpanElement>("solve-ms").textContent = frame.solve_ms.toFixed(2);
      el<HTMLSpanElement>("flags").textContent = frame.flags.join(", ") || "-";
      document.body.classList.toggle("carried-forward", isCarriedForward(frame));
      renderedFrames += 1;
    }
    renderTrace(fidelityCtx, state.fidelity, "#7dc4e4", "fidelity");
    renderTrace(purityCtx, state.purity, "#a6da95", "purity");
    renderTrace(concurrenceCtx, state.concurrence, "#eed49f", "concurrence");

    if (now - fpsWindowStart >= 1000) {
      fps = (renderedFrames * 1000) / (now - fpsWindowStart);
      renderedFrames = 0;
      fpsWindowStart = now;
    }
    hud.textContent =
      `${fps.toFixed(1)} fps | frames ${state.stats.framesReceived} | ` +
      `service drops ${state.stats.serviceDrops} | pending ${commands.pendingCount()}`;
    status.textContent = state.connection;
    status.className = `status ${state.connection}`;
    if (state.banner) {
      banner.textContent = state.banner;
      banner.classList.remove("hidden");
    } else {
      banner.classList.add("hidden");
    }
    requestAnimationFrame(tick);
  }

  socket.connect();
  requestAnimationFrame(tick);
}

main();
