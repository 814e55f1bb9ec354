/** DOM rendering and event wiring for the chat + A/B voting page. */

import { ApiClient, ApiError } from "./api.js";
import { SessionView } from "./state.js";
import { TIE, type ReportResponse, type TallyPayload } from "./types.js";

export interface App {
  state: SessionView;
  sendUtterance(text: string): Promise<void>;
  submitVote(lineId: string, choice: string): Promise<void>;
  showReport(): Promise<void>;
}

export function createApp(
  root: HTMLElement,
  api: ApiClient,
  rng: () => number = Math.random,
): App {
  const state = new SessionView(rng);
  root.innerHTML = `
    <header>
      <h1>advchat</h1>
      <button id="report-btn" type="button">Show report</button>
    </header>
    <div id="error" hidden></div>
    <main id="lines"></main>
    <section id="report" hidden></section>
    <footer>
      <input id="input" placeholder="Say something..." autocomplete="off" />
      <button id="send" type="button" disabled>Send</button>
    </footer>`;

  const linesEl = root.querySelector("#lines") as HTMLElement;
  const errorEl = root.querySelector("#error") as HTMLElement;
  const reportEl = root.querySelector("#report") as HTMLElement;
  const inputEl = root.querySelector("#input") as HTMLInputElement;
  const sendEl = root.querySelector("#send") as HTMLButtonElement;

  function showError(message: string): void {
    errorEl.textContent = message;
    errorEl.hidden = false;
  }

  function clearError(): void {
    errorEl.hidden = true;
    errorEl.textContent = "";
  }

  function renderLine(lineId: string): void {
    const line = state.line(lineId);
    let section = linesEl.querySelector(
      `[data-line-id="${lineId}"]`,
    ) as HTMLElement | null;
    if (!section) {
      section = document.createElement("section");
      section.className = "line";
      section.dataset.lineId = lineId;
      linesEl.appendChild(section);
    }
    const candidates = line.slots
      .map(
        (slot) => `
      <article class="candidate${line.voteState === slot.model ? " chosen" : ""}"
               data-model="${slot.model}">
        <h3>${slot.label}</h3>
        <p class="text">${escapeHtml(slot.text)}</p>
        <p class="score">${slot.score === null ? "" : `score ${slot.score.toFixed(4)}`}</p>
        <button class="vote" data-line="${lineId}" data-choice="${slot.model}"
                type="button">This one is better</button>
      </article>`,
      )
      .join("");
    section.innerHTML = `
      <p class="utterance">${escapeHtml(line.utterance)}</p>
      ${line.tie ? '<p class="tie-flag">server calls this a tie</p>' : ""}
      <div class="candidates">${candidates}</div>
      <button class="vote tie-vote" data-line="${lineId}" data-choice="${TIE}"
              type="button">Tie</button>
      <p class="vote-state">${voteLabel(line.voteState)}</p>`;
  }

  function voteLabel(voteState: string): string {
    if (voteState === "unvoted") return "no vote yet";
    if (voteState === "tie") return "voted: tie (carries no vote)";
    return `voted: ${voteState}`;
  }

  async function sendUtterance(text: string): Promise<void> {
    if (!text.trim()) return;
    clearError();
    try {
      const response = await api.chat(state.sessionId, text);
      state.addLine(text, response);
      renderLine(response.line_id);
      inputEl.value = "";
      sendEl.disabled = true;
    } catch (error) {
      // input stays put so the user can retry
      showError(error instanceof ApiError ? error.message : String(error));
    }
  }

  async function submitVote(lineId: string, choice: string): Promise<void> {
    clearError();
    const line = state.line(lineId);
    const previous = line.voteState;
    state.setVote(lineId, choice === TIE ? "tie" : choice); // optimistic
    renderLine(lineId);
    try {
      const record = await api.vote(lineId, choice);
      state.setVote(lineId, record.winner === TIE ? "tie" : record.winner);
    } catch (error) {
      state.setVote(lineId, previous); // server rejected: roll back
      showError(error instanceof ApiError ? error.message : String(error));
    }
    renderLine(lineId);
  }

  async function showReport(): Promise<void> {
    clearError();
    try {
      const payload = await api.report();
      reportEl.innerHTML = renderReport(payload);
      reportEl.hidden = false;
    } catch (error) {
      showError(error instanceof ApiError ? error.message : String(error));
    }
  }

  inputEl.addEventListener("input", () => {
    sendEl.disabled = !inputEl.value.trim();
  });
  inputEl.addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter" && inputEl.value.trim()) {
      void sendUtterance(inputEl.value);
    }
  });
  sendEl.addEventListener("click", () => void sendUtterance(inputEl.value));
  root.querySelector("#report-btn")!.addEventListener("click", () => void showReport());
  linesEl.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.matches("button.vote")) {
      void submitVote(target.dataset.line!, target.dataset.choice!);
    }
  });

  return { state, sendUtterance, submitVote, showReport };
}

export function renderReport(payload: ReportResponse): string {
  const agreement = `${payload.jaccard} (${(payload.jaccard * 100).toFixed(0)}%)`;
  return `
    <h2>Evaluation report</h2>
    ${renderTally("Human votes", payload.human)}
    ${renderTally("Adversarial votes", payload.adversarial)}
    <p class="jaccard">human/discriminator agreement (Jaccard): ${agreement}</p>`;
}

function renderTally(title: string, tally: TallyPayload): string {
  if (tally.contested === 0 || tally.percentages === null) {
    return `<h3>${title}</h3><p class="empty">no contested lines yet</p>`;
  }
  const rows = Object.keys(tally.counts)
    .sort()
    .map(
      (model) => `
      <tr><td>${escapeHtml(model)}</td>
          <td>${tally.counts[model]}</td>
          <td>${tally.percentages![model]}%</td></tr>`,
    )
    .join("");
  return `
    <h3>${title}</h3>
    <table>
      <thead><tr><th>model</th><th>wins</th><th>share</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    <p class="contested">${tally.contested} contested lines</p>`;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
