/**
 * Thin wrapper over the browser speech recognition API.
 *
 * Emits bursts of whitespace-split tokens; the session turns them into
 * draft texts with the shared assembly rules. Everything is injectable
 * so tests can drive a fake recognizer, and absence of the API is a
 * first-class state the UI turns into a typed-mode fallback notice.
 */

interface RecognitionResultLike {
  0: { transcript: string };
  isFinal: boolean;
}

interface RecognitionEventLike {
  resultIndex: number;
  results: ArrayLike<RecognitionResultLike>;
}

export interface RecognitionLike {
  continuous: boolean;
  interimResults: boolean;
  lang: string;
  onresult: ((event: RecognitionEventLike) => void) | null;
  onerror: ((event: { error: string }) => void) | null;
  start(): void;
  stop(): void;
}

type RecognitionCtor = new () => RecognitionLike;

interface SpeechHost {
  SpeechRecognition?: RecognitionCtor;
  webkitSpeechRecognition?: RecognitionCtor;
}

export class SpeechUnavailableError extends Error {
  constructor() {
    super("speech recognition is not available in this browser");
    this.name = "SpeechUnavailableError";
  }
}

export function speechAvailable(host: SpeechHost = globalThis as SpeechHost): boolean {
  return Boolean(host.SpeechRecognition ?? host.webkitSpeechRecognition);
}

export class SpeechCapture {
  private recognition: RecognitionLike;
  listening = false;

  constructor(onTokens: (tokens: string[]) => void,
              onError: (message: string) => void = () => {},
              host: SpeechHost = globalThis as SpeechHost) {
    const Ctor = host.SpeechRecognition ?? host.webkitSpeechRecognition;
    if (!Ctor) throw new SpeechUnavailableError();
    this.recognition = new Ctor();
    this.recognition.continuous = true;
    this.recognition.interimResults = false;
    this.recognition.lang = "en-US";
    this.recognition.onresult = (event) => {
      for (let i = event.resultIndex; i < event.results.length; i++) {
        const result = event.results[i];
        if (!result.isFinal) continue;
        const tokens = result[0].transcript.trim().split(/\s+/)
          .filter((t) => t.length > 0);
        if (tokens.length > 0) onTokens(tokens);
      }
    };
    this.recognition.onerror = (event) => onError(event.error);
  }

  start(): void {
    if (this.listening) return;
    this.recognition.start();
    this.listening = true;
  }

  stop(): void {
    if (!this.listening) return;
    this.recognition.stop();
    this.listening = false;
  }
}
