// Connection settings persist across reloads; rendered state never does
// (it is rebuilt from the API, the server cursor included).

export interface SessionSettings {
  base: string;
  token: string;
}

const KEY = "caremesh.session";

const storage = (): Storage | null =>
  typeof localStorage === "undefined" ? null : localStorage;

export function loadSession(): SessionSettings | null {
  const raw = storage()?.getItem(KEY);
  if (!raw) return null;
  try {
    const parsed = JSON.parse(raw) as SessionSettings;
    return parsed.base && parsed.token ? parsed : null;
  } catch {
    return null;
  }
}

export function saveSession(settings: SessionSettings): void {
  storage()?.setItem(KEY, JSON.stringify(settings));
}

export function clearSession(): void {
  storage()?.removeItem(KEY);
}

export async function defaultApiBase(): Promise<string> {
  try {
    const response = await fetch("./config.json");
    if (response.ok) {
      const config = (await response.json()) as { apiBaseUrl?: string };
      if (config.apiBaseUrl) return config.apiBaseUrl;
    }
  } catch {
    // static config is optional; fall through to a sensible default
  }
  return "http://127.0.0.1:8420";
}
