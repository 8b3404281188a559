// Wire types mirroring the coordination service's canonical JSON shapes.
export {};
