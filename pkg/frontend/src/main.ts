/**
 * Bootstrap: pick a finished match job, then run the review loop.
 *
 * The service base URL defaults to the page origin (the assistant serves
 * these assets itself); override with ?api=http://host:port when developing
 * against a separately running service.
 */

import { ApiClient, CandidateRow } from "./api.js";
import { ReviewSession } from "./state.js";
import { renderExport, renderJobList, renderSession } from "./view.js";

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("api") ?? "");

const jobsContainer = document.getElementById("jobs")!;
const sessionContainer = document.getElementById("session")!;
const statusLine = document.getElementById("status")!;

let session: ReviewSession | null = null;

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "err" : "";
}

function redraw(): void {
  if (!session) return;
  renderSession(sessionContainer, session, {
    onDecide: (row, verdict) => void decide(row, verdict),
    onEdit: (row) => void edit(row),
    onFiltersChanged: redraw,
    onExport: () => void doExport(),
    onRefresh: () => void refresh(),
  });
}

async function decide(row: CandidateRow, verdict: "accepted" | "rejected" | "edited"): Promise<void> {
  if (!session) return;
  try {
    await session.decide(row, verdict);
    setStatus(`${verdict}: ${row.source.join(".")} -> ${row.target.join(".")}`);
  } catch (error) {
    setStatus(error instanceof Error ? error.message : String(error), true);
  }
  redraw();
}

async function edit(row: CandidateRow): Promise<void> {
  if (!session) return;
  const sourceText = window.prompt(
    "Replacement source as relation.attribute",
    row.source.join("."),
  );
  if (!sourceText) return;
  const targetText = window.prompt(
    "Replacement target as relation.attribute",
    row.target.join("."),
  );
  if (!targetText) return;
  const split = (text: string): [string, string] => {
    const dot = text.indexOf(".");
    return [text.slice(0, dot), text.slice(dot + 1)];
  };
  try {
    await session.decide(row, "edited", {
      source: split(sourceText),
      target: split(targetText),
    });
    setStatus(`edited: now ${sourceText} -> ${targetText}`);
  } catch (error) {
    setStatus(error instanceof Error ? error.message : String(error), true);
  }
  redraw();
}

async function doExport(): Promise<void> {
  if (!session) return;
  try {
    const doc = await session.exportAlignment();
    renderExport(sessionContainer, doc);
    setStatus(`export: ${doc.alignment.length} accepted pair(s)`);
  } catch (error) {
    setStatus(error instanceof Error ? error.message : String(error), true);
  }
}

async function refresh(): Promise<void> {
  if (!session) return;
  try {
    await session.refresh();
    setStatus(`job ${session.jobId}: ${session.rows.length} candidates`);
  } catch (error) {
    setStatus(error instanceof Error ? error.message : String(error), true);
  }
  redraw();
}

async function openJob(jobId: string): Promise<void> {
  session = new ReviewSession(api, jobId);
  await refresh();
}

async function loadJobs(): Promise<void> {
  try {
    const jobs = await api.listJobs();
    renderJobList(jobsContainer, jobs, (jobId) => void openJob(jobId));
    setStatus(`${jobs.length} job(s)`);
  } catch (error) {
    setStatus(error instanceof Error ? error.message : String(error), true);
    const retry = document.createElement("button");
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void loadJobs());
    jobsContainer.replaceChildren(retry);
  }
}

void loadJobs();
