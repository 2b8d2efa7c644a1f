int short_blend(short a, short b, unsigned char w)
{
    int r = 0;
    int x = a;
    int y = b;
    r = x * w + y * 255 - y * w;
    r /= 255;
    return r;
}
