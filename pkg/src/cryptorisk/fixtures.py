"""Small ready-made programs used by the tests, demos and CLI smoke runs."""

from __future__ import annotations

from cryptorisk.appir.builder import ProgramBuilder
from cryptorisk.appir.model import Program

S = "java.lang.String"
CIPHER = "javax.crypto.Cipher"
MAIN = "com.example.SecureSender"


def motivating_example() -> Program:
    """Encrypt a string with a default-mode AES cipher, then send and save the ciphertext.

    ``encrypt`` asks for ``Cipher.getInstance("AES")`` (ECB by default) and
    returns the ciphertext; ``run`` passes it to ``send``, which writes it to a
    ``DataOutputStream`` over an ``HttpURLConnection``, and to ``save``, which
    writes it to a ``FileOutputStream``. Two sensitive flows leave the misuse.
    """
    pb = ProgramBuilder("motivating")
    c = pb.add_class(MAIN)

    enc = c.method("encrypt", [("text", S)])
    (
        enc.const("kalg", "AES")
        .call("kg", "javax.crypto.KeyGenerator.getInstance(java.lang.String)", ["kalg"], type="javax.crypto.KeyGenerator")
        .const("bits", 128)
        .call(None, "javax.crypto.KeyGenerator.init(int)", ["bits"], receiver="kg")
        .call("key", "javax.crypto.KeyGenerator.generateKey()", receiver="kg", type="javax.crypto.SecretKey")
        .const("alg", "AES")
        .call("cipher", f"{CIPHER}.getInstance({S})", ["alg"], type=CIPHER)
        .const("mode", 1)
        .call(None, f"{CIPHER}.init(int,java.security.Key)", ["mode", "key"], receiver="cipher")
        .call("plain", f"{S}.getBytes()", receiver="text", type="byte[]")
        .call("out", f"{CIPHER}.doFinal(byte[])", ["plain"], receiver="cipher", type="byte[]")
        .ret("out")
    )

    send = c.method("send", [("data", "byte[]")])
    (
        send.const("spec", "https://example.com/upload")
        .new("url", "java.net.URL", ["spec"], [S])
        .call("conn", "java.net.URL.openConnection()", receiver="url", type="java.net.URLConnection")
        .assign("urlConn", "conn", type="java.net.HttpURLConnection")
        .call("os", "java.net.HttpURLConnection.getOutputStream()", receiver="urlConn", type="java.io.OutputStream")
        .new("dos", "java.io.DataOutputStream", ["os"], ["java.io.OutputStream"])
        .call(None, "java.io.DataOutputStream.write(byte[])", ["data"], receiver="dos")
        .ret()
    )

    save = c.method("save", [("data", "byte[]")])
    (
        save.const("path", "/sdcard/secret.bin")
        .new("fos", "java.io.FileOutputStream", ["path"], [S])
        .call(None, "java.io.FileOutputStream.write(byte[])", ["data"], receiver="fos")
        .ret()
    )

    run = c.method("run", [("message", S)])
    (
        run.call("ct", f"{MAIN}.encrypt({S})", ["message"], receiver="this", type="byte[]")
        .call(None, f"{MAIN}.send(byte[])", ["ct"], receiver="this")
        .call(None, f"{MAIN}.save(byte[])", ["ct"], receiver="this")
        .ret()
    )
    pb.entry(f"{MAIN}.run({S})")
    return pb.build()
