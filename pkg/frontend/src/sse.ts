/**
 * Minimal server-sent-events reader over fetch streams, usable from both
 * the browser and node tests (no EventSource dependency).
 */

export interface SseEvent {
  event: string;
  data: string;
}

/** Parse one blank-line-terminated SSE block. Returns null for comments. */
export function parseBlock(block: string): SseEvent | null {
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith(":") || line.trim() === "") {
      continue;
    }
    const sep = line.indexOf(":");
    const field = sep === -1 ? line : line.slice(0, sep);
    let value = sep === -1 ? "" : line.slice(sep + 1);
    if (value.startsWith(" ")) {
      value = value.slice(1);
    }
    if (field === "event") {
      event = value;
    } else if (field === "data") {
      data.push(value);
    }
  }
  if (data.length === 0) {
    return null;
  }
  return { event, data: data.join("\n") };
}

/** Split a growing buffer into complete blocks, returning the remainder. */
export function drainBuffer(buffer: string): { blocks: string[]; rest: string } {
  const parts = buffer.split("\n\n");
  return { blocks: parts.slice(0, -1), rest: parts[parts.length - 1] ?? "" };
}

export async function readSse(
  stream: ReadableStream<Uint8Array>,
  onEvent: (event: SseEvent) => void,
  signal?: AbortSignal,
): Promise<void> {
  const reader = stream.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    for (;;) {
      if (signal?.aborted) {
        return;
      }
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      const { blocks, rest } = drainBuffer(buffer);
      buffer = rest;
      for (const block of blocks) {
        const parsed = parseBlock(block);
        if (parsed) {
          onEvent(parsed);
        }
      }
    }
  } finally {
    reader.releaseLock();
  }
}
