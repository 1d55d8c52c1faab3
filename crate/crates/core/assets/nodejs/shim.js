// HTTP shim wrapping a user handler. Injected into every nodejs bundle.
//
// Environment:
//   FORGE_HANDLER   path of the handler file
//   FORGE_ENTRY     name of the handler function (default "fn")
//
// Prints "FORGE_LISTENING <port>" once the server socket is bound.
'use strict';
const fs = require('fs');
const http = require('http');
const path = require('path');
const Module = require('module');

const file = path.resolve(process.env.FORGE_HANDLER);
const entry = process.env.FORGE_ENTRY || 'fn';

let handler;
try {
  const src = fs.readFileSync(file, 'utf8');
  const m = new Module(file, module);
  m.filename = file;
  m.paths = Module._nodeModulePaths(path.dirname(file));
  // Generated code often declares `function fn` without exporting it.
  const exportTail = `\n;if (typeof ${entry} === 'function' && (module.exports == null || typeof module.exports.${entry} !== 'function')) { module.exports.${entry} = ${entry}; }\n`;
  m._compile(src + exportTail, file);
  const exp = m.exports;
  handler = exp && typeof exp[entry] === 'function' ? exp[entry] : (typeof exp === 'function' ? exp : undefined);
} catch (e) {
  process.stderr.write(String((e && e.stack) || e) + '\n');
  process.exit(3);
}
if (typeof handler !== 'function') {
  process.stderr.write(`TypeError: handler module has no function '${entry}'\n`);
  process.exit(4);
}

process.on('uncaughtException', (e) => process.stderr.write(String((e && e.stack) || e) + '\n'));
process.on('unhandledRejection', (e) => process.stderr.write(String((e && e.stack) || e) + '\n'));

function encode(result) {
  if (result === undefined || result === null) return Buffer.alloc(0);
  if (Buffer.isBuffer(result)) return result;
  if (typeof result === 'string') return Buffer.from(result, 'utf8');
  try {
    return Buffer.from(JSON.stringify(result), 'utf8');
  } catch (e) {
    return Buffer.from(String(result), 'utf8');
  }
}

function send(res, status, body, guestError) {
  const headers = { 'Content-Type': 'text/plain; charset=utf-8', 'Content-Length': body.length };
  if (guestError) headers['X-Guest-Error'] = '1';
  res.writeHead(status, headers);
  res.end(body);
}

const server = http.createServer((req, res) => {
  if (req.method === 'GET' && req.url === '/health') return send(res, 200, Buffer.from('ok'));
  if (req.method !== 'POST' || req.url !== '/invoke') return send(res, 404, Buffer.from('not found'));
  const chunks = [];
  req.on('data', (c) => chunks.push(c));
  req.on('end', () => {
    const input = Buffer.concat(chunks).toString('utf8');
    Promise.resolve()
      .then(() => handler(input))
      .then(
        (result) => send(res, 200, encode(result)),
        (e) => {
          const trace = String((e && e.stack) || e);
          process.stderr.write(trace + '\n');
          send(res, 500, Buffer.from(trace, 'utf8'), true);
        },
      );
  });
});

server.listen(0, '127.0.0.1', () => {
  process.stdout.write(`FORGE_LISTENING ${server.address().port}\n`);
});
