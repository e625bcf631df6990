/** Replay a recorded session journal against a fresh server.
 *
 * Every state-changing UI action corresponds to one journal entry; replaying
 * them in order reproduces the final composite bit-exactly.
 */

import { SegeditClient } from "./api.js";
import type { EditParams, JournalEntry, ProjectParams, RefineParams } from "./types.js";

function b64ToBytes(b64: string): Uint8Array {
  if (typeof Buffer !== "undefined") {
    return new Uint8Array(Buffer.from(b64, "base64"));
  }
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export async function replayJournal(client: SegeditClient, entries: JournalEntry[]): Promise<void> {
  for (const entry of entries) {
    switch (entry.action) {
      case "set_labels":
        await client.putLabels(b64ToBytes(entry.params["png_b64"] as string));
        break;
      case "project":
        await client.project(entry.params as ProjectParams);
        break;
      case "edit":
        await client.edit(entry.params as unknown as EditParams);
        break;
      case "refine":
        await client.refine(entry.params as unknown as RefineParams);
        break;
      case "undo":
        await client.undo();
        break;
      default:
        throw new Error(`unknown journal action ${(entry as JournalEntry).action}`);
    }
  }
}
