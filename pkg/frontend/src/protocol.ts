// Wire schema of the session service. Must match the server exactly:
// events and acks over the stream, notifications and patches pushed down,
// JSON bodies on the REST endpoints.

export type EventKind =
  | "key"
  | "pointer_move"
  | "click"
  | "scroll"
  | "focus"
  | "blur"
  | "page_hidden"
  | "page_visible";

export type PayloadKind = "continuation" | "encouragement";
export type Condition = "proposed" | "control" | "none";
export type DocKind = "text" | "slide_deck";

export interface EventMsg {
  type: "event";
  at: number; // session-relative ms
  kind: EventKind;
  chars_delta: number;
}

export interface AckMsg {
  type: "ack";
  received_at: number;
}

export interface NotificationMsg {
  type: "notification";
  at: number;
  headline: string;
  body: string;
  payload_kind: PayloadKind;
  episode_id: string;
}

export interface SlideShape {
  title: string;
  body_items: string[];
  image_caption?: string;
  image_asset?: string;
}

export interface PatchMsg {
  type: "patch";
  at: number;
  episode_id: string;
  slide: SlideShape;
  generated: boolean;
}

export interface ErrorMsg {
  type: "error";
  error: string;
  detail?: string;
}

export interface PongMsg {
  type: "pong";
}

export type ServerMsg = AckMsg | NotificationMsg | PatchMsg | ErrorMsg | PongMsg;

export interface SessionConfigBody {
  idle_threshold_t?: number;
  away_delay?: number;
  condition?: Condition;
  retain_content?: boolean;
  progress_window?: number | null;
}

export interface TextDocumentBody {
  doc_kind: "text";
  text: string;
}

export interface DeckDocumentBody {
  doc_kind: "slide_deck";
  slides: SlideShape[];
}

export type DocumentBody = TextDocumentBody | DeckDocumentBody;

export const paths = {
  sessions: "/sessions",
  events: (id: string) => `/sessions/${id}/events`,
  document: (id: string) => `/sessions/${id}/document`,
  threshold: (id: string) => `/sessions/${id}/threshold`,
  session: (id: string) => `/sessions/${id}`,
  stream: (id: string) => `/sessions/${id}/stream`,
};

export function streamUrl(baseUrl: string, sessionId: string): string {
  return baseUrl.replace(/^http/, "ws") + paths.stream(sessionId);
}
