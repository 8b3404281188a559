// Event-stream client over fetch + ReadableStream (EventSource cannot set
// an Authorization header, and this also runs headless under node).
//
// Frames arrive as `id: <seq>\n` + `data: <json>\n\n`; `:hb` comment frames
// are heartbeats. Reconnects resume from the highest seq seen, with
// exponential backoff capped at 30 s.
export class SseParser {
    buffer = "";
    push(chunk) {
        this.buffer += chunk;
        const events = [];
        let split;
        while ((split = this.buffer.indexOf("\n\n")) >= 0) {
            const frame = this.buffer.slice(0, split);
            this.buffer = this.buffer.slice(split + 2);
            if (!frame || frame.startsWith(":"))
                continue; // heartbeat / keepalive
            const event = {};
            for (const line of frame.split("\n")) {
                if (line.startsWith("id: "))
                    event.id = Number(line.slice(4));
                else if (line.startsWith("data: "))
                    event.data = line.slice(6);
            }
            if (event.id !== undefined || event.data !== undefined)
                events.push(event);
        }
        return events;
    }
}
export function openStream(options) {
    let stopped = false;
    let controller = null;
    let afterSeq = options.afterSeq;
    let backoff = 1000;
    const cap = options.maxBackoffMs ?? 30_000;
    const loop = async () => {
        while (!stopped) {
            controller = new AbortController();
            try {
                const response = await fetch(`${options.base}/stream?after_seq=${afterSeq}`, {
                    headers: { Authorization: `Bearer ${options.token}` },
                    signal: controller.signal,
                });
                if (!response.ok || !response.body)
                    throw new Error(`stream ${response.status}`);
                options.onStatus?.("open");
                backoff = 1000;
                const reader = response.body.getReader();
                const decoder = new TextDecoder();
                const parser = new SseParser();
                for (;;) {
                    const { done, value } = await reader.read();
                    if (done)
                        break;
                    for (const event of parser.push(decoder.decode(value, { stream: true }))) {
                        if (!event.data)
                            continue;
                        const delivery = JSON.parse(event.data);
                        afterSeq = Math.max(afterSeq, delivery.seq);
                        options.onDelivery(delivery);
                    }
                }
            }
            catch {
                // dropped connection or abort; the resume path below handles both
            }
            if (stopped)
                break;
            options.onStatus?.("retry");
            await new Promise((resolve) => setTimeout(resolve, backoff));
            backoff = Math.min(backoff * 2, cap);
        }
        options.onStatus?.("closed");
    };
    void loop();
    return {
        stop() {
            stopped = true;
            controller?.abort();
        },
    };
}
