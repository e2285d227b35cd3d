/**
 * Span highlighting: map a browser text selection to character offsets in
 * the backend passage text.
 *
 * The passage must be rendered as a single text node so DOM offsets equal
 * string offsets; the round-trip (slice the passage with the returned
 * offsets and compare to the selected string) is checked before anything
 * is submitted.
 */

export interface SpanOffsets {
  start: number;
  end: number;
}

export class SelectionRejected extends Error {
  constructor(reason: string) {
    super(reason);
    this.name = "SelectionRejected";
  }
}

/**
 * Offsets of the current selection within the passage element, or null for
 * an empty/collapsed selection. Selections crossing out of the passage's
 * text node are rejected.
 */
export function selectionOffsets(passageEl: HTMLElement, selection: Selection | null): SpanOffsets | null {
  if (!selection || selection.rangeCount === 0 || selection.isCollapsed) {
    return null;
  }
  const range = selection.getRangeAt(0);
  const textNode = passageEl.firstChild;
  if (!textNode || textNode.nodeType !== Node.TEXT_NODE) {
    throw new SelectionRejected("passage is not rendered as a single text node");
  }
  if (range.startContainer !== textNode || range.endContainer !== textNode) {
    throw new SelectionRejected("selection must stay inside the passage");
  }
  const start = Math.min(range.startOffset, range.endOffset);
  const end = Math.max(range.startOffset, range.endOffset);
  if (start === end) {
    return null;
  }
  const passageText = textNode.textContent ?? "";
  const slice = passageText.slice(start, end);
  if (slice !== range.toString()) {
    throw new SelectionRejected("selection does not round-trip to the passage text");
  }
  return { start, end };
}

/** Slice the passage text with offsets; used for the round-trip guarantee. */
export function sliceForOffsets(passageText: string, offsets: SpanOffsets): string {
  return passageText.slice(offsets.start, offsets.end);
}
